import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fuelgan import data, synth  # noqa: E402


def synthetic_dataset(tmp_dir, rules=data.LabelRuleSet(), seed=0):
    raw = Path(tmp_dir) / f"raw-{seed}.csv"
    synth.generate(synth.SynthConfig(seed=seed), raw)
    records, rejected = data.load_csv(raw)
    kept, tally = data.clean(records)
    return data.build_dataset(kept, rules, seed=seed), rejected, tally


@pytest.fixture(scope="session")
def default_synthetic(tmp_path_factory):
    return synthetic_dataset(tmp_path_factory.mktemp("synth"))
