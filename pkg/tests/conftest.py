import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ptlfusion.synth import SynthConfig, synth_corpus


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 60-windows-per-condition corpus shared by read-only tests."""
    out = tmp_path_factory.mktemp("small_corpus")
    return synth_corpus(SynthConfig(windows_per_condition=60, snr_db=10.0), out, seed=11)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A minimal corpus for CLI plumbing tests."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    return synth_corpus(SynthConfig(windows_per_condition=16, snr_db=15.0), out, seed=5)
