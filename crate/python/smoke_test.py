"""Smoke test for the `shotsum` extension module.

Build it first with `cargo build --release -p shotsum-py`. When `shotsum` is
not importable, the compiled library under target/ is copied next to a temp
path as `shotsum.so` and imported from there.
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_shotsum():
    try:
        import shotsum
        return shotsum
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libshotsum_py.so")
        if os.path.exists(lib):
            where = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(where, "shotsum.so"))
            sys.path.insert(0, where)
            import shotsum
            return shotsum
    sys.exit("shotsum extension not found; run `cargo build --release -p shotsum-py`")


def main():
    ss = import_shotsum()

    full = ss.Config()
    counts = ss.count_params(full)
    assert 120_000_000 <= counts["total"] <= 150_000_000, counts
    print(f"parameters at default dims: {counts['total']:,}")

    cfg = ss.Config.from_file(os.path.join(ROOT, "configs", "tiny.conf"))
    cfg.set("epochs", "15")
    assert cfg.get("epochs") == "15"
    try:
        cfg.set("no_such_key", "1")
        raise AssertionError("unknown key accepted")
    except ValueError:
        pass

    dims = dict(feat_dim=8, audio_dim=4, caption_dim=6)
    records = [ss.synthetic_record(seed, 48, **dims) for seed in range(4)]
    assert len(records[0]) == 48 and records[0].n_frames == 48 * 15

    model, losses = ss.Model.train(cfg, records)
    assert len(losses) == 15 and all(math.isfinite(x) for x in losses)
    assert losses[-1] < losses[0], losses
    print(f"loss {losses[0]:.4f} -> {losses[-1]:.4f}")

    scores = model.predict(records[0])
    assert len(scores) == 48 and all(0.0 <= p <= 1.0 for p in scores)
    summary = model.summarize(records[0])
    kept = sum(summary["mask"])
    assert kept <= math.floor(0.15 * records[0].n_frames)
    print(f"summary keeps {kept} of {records[0].n_frames} frames, F = {model.fscore(records[0]):.3f}")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.ckpt")
        model.save(path)
        again = ss.Model.load(cfg, path)
        assert again.predict(records[0]) == scores
        h5 = os.path.join(d, "v.h5")
        ss.write_records(h5, records)
        loaded = ss.load_records(h5, strict=True, audio_dim=4, caption_dim=6)
        assert [r.video_id for r in loaded] == [r.video_id for r in records]

    assert ss.knapsack([3.0, 4.0, 5.0], [2, 3, 4], 5) == ([0, 1], 7.0)
    cps, _ = ss.kts([[0.0]] * 5 + [[5.0]] * 5, change_points=1)
    assert cps == [5]
    assert abs(ss.fscore([1, 1, 0, 0], [[1, 0, 1, 0]]) - 0.5) < 1e-12
    fl = ss.focal_loss([0.5], [1], alpha=0.25, gamma=2.0)
    assert abs(fl - 0.25 * 0.25 * math.log(2)) < 1e-12

    single = ss.Config(
        "feat_dim = 8\naudio_dim = 4\ncaption_dim = 6\nlambda = 2\nheads = 2\n"
        "layers = 1\nshots = 3\npad_ratio = 0.25"
    )
    masks = dict(ss.trace(single, 12, [3, 0]))
    assert masks[3] == list(range(8)), masks[3]
    assert masks[0] == list(range(4)), masks[0]

    try:
        model.predict(ss.synthetic_record(0, 5, **dims))
        raise AssertionError("short sequence accepted")
    except ValueError as e:
        assert "shorter" in str(e)

    print("smoke test passed")


if __name__ == "__main__":
    main()
