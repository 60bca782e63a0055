import json
import os
import shutil
from collections import Counter

import pytest

from search_accelerator.sequence_miner import JourneyContext

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def workspace(tmp_path):
    """A writable copy of tests/fixtures; stage outputs land in <workspace>/out."""
    target = tmp_path / "ws"
    shutil.copytree(FIXTURES, target)
    return target


@pytest.fixture
def config_path(workspace):
    return str(workspace / "config.json")


@pytest.fixture
def gold_journey():
    return JourneyContext(
        "18k gold diamonds necklace",
        source_queries=Counter({"18k gold dacid yarmen": 1, "david yurman chain gold 18k": 1}),
        converging_queries=Counter({"david yurman chain gold 18k": 1, "18k gold david yurman": 1}),
        support=2,
    )


@pytest.fixture
def gold_alternates():
    return [
        "18k white gold diamond necklace",
        "18k yellow gold diamond necklace",
        "18k gold diamond pendant necklace",
        "18k gold diamond necklace david yurman",
        "18k gold diamond necklace tiffany & co",
        "18k gold diamond necklace cartier",
        "18k gold diamond necklace van cleef & arpels",
    ]


@pytest.fixture
def gold_completion(gold_alternates):
    return json.dumps({"transitional query": "18k gold diamonds necklace", "alternate queries": gold_alternates})
