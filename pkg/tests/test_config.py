import pytest

from diffurank.config import EngineConfig, load_config
from diffurank.errors import ValidationError
from diffurank.orchestrate import RerankStrategy


def test_defaults():
    cfg = load_config(None)
    assert cfg.strategy == "perm_assign" and cfg.window == 20 and cfg.step_size == 10 and cfg.top_k == 100


def test_toml_with_overrides(tmp_path):
    (tmp_path / "c.toml").write_text(
        """
strategy = "perm_samp"
k = 4
jobs = 2

[data]
corpus = "data/corpus.jsonl"

[oracle]
path = "data/oracle.json"
gamma = 1.5
"""
    )
    cfg = load_config(tmp_path / "c.toml", {"k": 8, "seed": None})
    assert cfg.k == 8 and cfg.seed == 0 and cfg.jobs == 2
    assert cfg.corpus == str((tmp_path / "data" / "corpus.jsonl").resolve())
    assert cfg.oracle_overrides == {"gamma": 1.5}
    job = cfg.job()
    assert job.strategy is RerankStrategy.PERM_SAMP and job.sampler.steps == 8


@pytest.mark.parametrize(
    "text",
    ['bogus = 1\n', 'strategy = "listwise"\n', 'strategy = "perm_samp"\n', 'k = 3\n', "= broken"],
)
def test_invalid_configs(tmp_path, text):
    (tmp_path / "c.toml").write_text(text)
    with pytest.raises(ValidationError):
        load_config(tmp_path / "c.toml")


def test_remote_url_from_env(monkeypatch):
    monkeypatch.setenv("DIFFURANK_REMOTE_URL", "http://host:1")
    assert EngineConfig(provider="remote").resolved_remote_url == "http://host:1"
    assert EngineConfig(provider="remote", remote_url="http://x").resolved_remote_url == "http://x"
