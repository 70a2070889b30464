"""One test per acceptance criterion, each at its stated tolerance and time budget.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the
pass/fail lines as they are produced.
"""

import json

import pytest

from bhdstab.acceptance import CRITERIA

# criteria 6 and 7 share the tuned gain schedules
_CTX: dict = {}


def _brief(details: dict) -> str:
    return json.dumps(details, default=str)[:2000]


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.id:02d}" for c in CRITERIA])
def test_criterion(criterion, capsys):
    result = criterion.run(_CTX)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.ok, _brief(result.details)
