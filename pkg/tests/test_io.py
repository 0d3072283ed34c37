import dataclasses

import numpy as np
import pytest

from mmirl.envs import BioreactorEnv
from mmirl.io import (
    CheckpointError,
    ConfigError,
    DatasetError,
    MetricsWriter,
    Sidecar,
    Trajectory,
    TrajectoryRecord,
    check_shapes,
    default_config,
    load_checkpoint,
    load_estimator,
    load_training_demos,
    make_env,
    parse_config,
    read_dataset,
    read_metrics,
    save_checkpoint,
    save_estimator,
    write_dataset,
    write_effective_config,
)
from mmirl.io.dataset import format_real
from mmirl.irl import MultiTaskAIRL
from mmirl.numeric import Mlp, ParamBlock


def random_records(n, rng, length=20, with_sidecar=True):
    out = []
    for i in range(n):
        sc = Sidecar(i % 2, rng.normal(size=length), "policy", rng.normal(size=2)) if with_sidecar else None
        out.append(TrajectoryRecord("bioreactor", rng.normal(size=(length, 2)), rng.uniform(0, 5, (length, 2)), sc))
    return out


def test_dataset_round_trip(tmp_path):
    recs = random_records(6, np.random.default_rng(0))
    write_dataset(tmp_path / "d.jsonl", recs)
    back = read_dataset(tmp_path / "d.jsonl")
    assert len(back) == 6
    for a, b in zip(recs, back):
        assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)
        assert a.sidecar.mode_label == b.sidecar.mode_label
        assert np.array_equal(a.sidecar.rewards, b.sidecar.rewards)
        assert np.array_equal(a.sidecar.final_state, b.sidecar.final_state)


def test_empty_file_is_empty_dataset(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert len(read_dataset(tmp_path / "e.jsonl")) == 0


def test_full_size_counts(tmp_path):
    recs = random_records(2112, np.random.default_rng(1), length=20)
    write_dataset(tmp_path / "big.jsonl", recs)
    d = read_dataset(tmp_path / "big.jsonl")
    assert len(d) == 2112
    assert d.mode_counts() == {0: 1056, 1: 1056}


def test_training_load_path_drops_labels(tmp_path):
    write_dataset(tmp_path / "d.jsonl", random_records(3, np.random.default_rng(0)))
    demos = load_training_demos(tmp_path / "d.jsonl")
    assert all(type(t) is Trajectory for t in demos)
    assert "sidecar" not in {f.name for f in dataclasses.fields(Trajectory)}


@pytest.mark.parametrize("edit, message", [
    (lambda s: s.replace('"schema_version":1', '"schema_version":7'), "line 2: schema version"),
    (lambda s: s[: len(s) - 40], "line 2: truncated"),
    (lambda s: s.replace('"length":20', '"length":19'), "line 2: states has 20 rows"),
    (lambda s: s.replace('"env_id":"bioreactor",', ""), "line 2: missing field 'env_id'"),
])
def test_bad_records_name_the_line(tmp_path, edit, message):
    write_dataset(tmp_path / "d.jsonl", random_records(2, np.random.default_rng(0)))
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    lines[1] = edit(lines[1])
    (tmp_path / "d.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=message):
        read_dataset(tmp_path / "d.jsonl")


def test_real_formatting():
    assert format_real(-0.0) == "-0.0"
    assert format_real(3) == "3.0"
    assert float(format_real(5e-324)) == 5e-324
    with pytest.raises(DatasetError):
        format_real(float("nan"))


def test_checkpoint_round_trip_bit_identical(tmp_path):
    net = Mlp([3, 4, 2]).init(np.random.default_rng(0))
    save_checkpoint(tmp_path / "c.ckpt", {"net": net.block}, {"iteration": 4}, {"extra": np.arange(3.0)})
    blocks, vectors, meta = load_checkpoint(tmp_path / "c.ckpt")
    assert blocks["net"].values.tobytes() == net.block.values.tobytes()
    assert blocks["net"].shapes == net.block.shapes
    assert np.array_equal(vectors["extra"], [0, 1, 2]) and meta == {"iteration": 4}
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_shape_mismatch_refused(tmp_path):
    save_checkpoint(tmp_path / "c.ckpt", {"net": Mlp([3, 4, 2]).block})
    blocks, _, _ = load_checkpoint(tmp_path / "c.ckpt")
    with pytest.raises(CheckpointError) as err:
        check_shapes(blocks, {"net": Mlp([3, 8, 2]).block.shapes})
    assert "(3, 4)" in str(err.value) and "(3, 8)" in str(err.value)
    with pytest.raises(CheckpointError):
        check_shapes(blocks, {"other": [(1, 1)]})


def test_corrupt_checkpoints_refused(tmp_path):
    (tmp_path / "bad").write_bytes(b"nonsense")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad")
    save_checkpoint(tmp_path / "c.ckpt", {"b": ParamBlock([(2, 2)])})
    data = (tmp_path / "c.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(data[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "t.ckpt")


def test_estimator_checkpoint_refuses_other_widths(tmp_path):
    env = BioreactorEnv(seed=0)
    demos = (np.ones((4, 20, 2)), np.ones((4, 20, 2)))
    est = MultiTaskAIRL(env=env, n_contexts=2, hidden=(8,), disc_hidden=(8,), inference_hidden=(8,),
                        inference_features=4, n_gen_episodes=4, n_disc_demos=4)
    est.partial_fit(demos, 0)
    save_estimator(tmp_path / "irl.ckpt", est)
    other = MultiTaskAIRL(env=env, n_contexts=2, hidden=(16,), disc_hidden=(8,), inference_hidden=(8,),
                          inference_features=4)
    with pytest.raises(CheckpointError, match="shape mismatch"):
        load_estimator(tmp_path / "irl.ckpt", other)


def test_empty_config_is_all_defaults():
    cfg = parse_config("")
    assert cfg.env.id == "bioreactor" and cfg.env.horizon == 20
    assert cfg.training.gamma == 1.0
    assert cfg.training.irl.alpha == 1.0 and cfg.training.irl.beta == 1.0
    assert cfg.training.irl.n_contexts == 2
    assert cfg.to_toml() == default_config().to_toml()


def test_mode_table_parsed():
    cfg = parse_config("[modes]\nM = 2\nk_values = [0.5, 0.7]\n")
    assert cfg.modes.k_values == [0.5, 0.7]
    assert make_env(cfg).params.k_values == (0.5, 0.7)
    cstr = parse_config('[env]\nid = "cstr"\n')
    assert cstr.modes.setpoints == [90.0, 86.0] and cstr.env.horizon == 300 and cstr.env.dt == 10.0


@pytest.mark.parametrize("text, key", [
    ("[training]\ngamma = 1.5\n", "training.gamma"),
    ("[training]\nspeed = 3\n", "training.speed"),
    ("[training]\nseed = \"x\"\n", "training.seed"),
    ("[env]\nid = \"moon\"\n", "env.id"),
    ("[modes]\nM = 3\n", "modes.k_values"),
    ("[training.irl]\nrollout_modes = \"demo\"\n", "rollout_modes"),
    ("[training.irl]\nn_contexts = 3\n", "n_contexts"),
    ("[env\n", "malformed"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_effective_config_echo_round_trips(tmp_path):
    cfg = parse_config('[env]\nid = "cstr"\n[training]\nseed = 4\n')
    path = write_effective_config(cfg, tmp_path)
    again = parse_config(path)
    assert again.to_toml() == cfg.to_toml() and again.hash() == cfg.hash()


def test_metrics_file(tmp_path):
    with MetricsWriter(tmp_path / "m.jsonl") as w:
        w({"iteration": 1, "L_I": 0.5})
        w({"iteration": 2, "L_I": 0.25})
    with MetricsWriter(tmp_path / "m.jsonl", append=True) as w:
        w({"iteration": 3, "L_I": 0.0})
    assert [r["iteration"] for r in read_metrics(tmp_path / "m.jsonl")] == [1, 2, 3]


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).parents[1] / "configs").glob("*.toml"))
    assert len(paths) == 4
    for p in paths:
        cfg = parse_config(p)
        assert make_env(cfg).spec.n_modes == cfg.modes.M
