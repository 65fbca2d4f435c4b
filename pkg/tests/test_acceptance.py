"""Acceptance suite: one test per release criterion.

Each test prints a PASS line with its wall time; budgets are asserted.
Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import time

import numpy as np
import pytest

import orthoflow as of
from orthoflow import backend
from orthoflow.gradcheck import attention_gradcheck, volume_gradcheck

INTERIOR_MARGIN = 32


class _Timer:
    def __init__(self, budget):
        self.budget = budget

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


def _report(name, timer, detail=""):
    print(f"\nCRITERION {name}: PASS ({timer.elapsed:.2f}s{', ' + detail if detail else ''})")
    assert timer.elapsed < timer.budget, f"{name} exceeded budget {timer.budget}s"


def _unit_features(rng, shape):
    data = rng.standard_normal(shape)
    data /= np.linalg.norm(data, axis=-1, keepdims=True)
    return of.FeatureMap(data)


def _identity_attended(target):
    return of.attend_pyramid(of.build_pyramid(target), radius=0)


def _interior_epe(flow, gt, valid):
    mask = np.zeros(valid.shape, dtype=bool)
    mask[INTERIOR_MARGIN:-INTERIOR_MARGIN, INTERIOR_MARGIN:-INTERIOR_MARGIN] = True
    return of.evaluate(flow, gt, valid & mask).epe


def test_criterion_1_channel_counts():
    with _Timer(budget=1.0) as t:
        rng = np.random.default_rng(0)
        src = _unit_features(rng, (8, 8, 4))
        att = _identity_attended(_unit_features(rng, (8, 8, 4)))
        vol = of.build_orthogonal_volume(src, att, of.FlowField.zeros(8, 8, dtype=np.float64))
        pyr = of.build_pyramid(_unit_features(rng, (8, 8, 4)))
        local2d = of.build_local2d_volume(src, pyr, of.FlowField.zeros(8, 8, dtype=np.float64))
        assert vol.channels == 34
        assert local2d.shape[0] == 243
        ratio = local2d.shape[0] / vol.channels
        assert abs(ratio - 7.147) < 0.0012  # 243/34 = 7.14705...
    _report("1 (channel counts 34 / 243)", t, f"ratio 1/{ratio:.3f}")


def test_criterion_2_complexity_model():
    with _Timer(budget=1.0) as t:
        kinds = of.RepresentationKind
        # three benchmark resolutions at floor(H/8) x floor(W/8)
        grids = {"448x1024": (56, 128), "1080x1920": (135, 240), "2160x3840": (270, 480)}
        for (h, w) in grids.values():
            hw = h * w
            assert of.element_count(kinds.LOCAL_ORTHOGONAL, h, w) == hw * 34
            assert of.element_count(kinds.LOCAL_2D, h, w) == hw * 243
            assert of.element_count(kinds.GLOBAL_1D, h, w) == hw * (h + w)
            assert of.element_count(kinds.ALL_PAIRS_4D, h, w) == hw * hw
        # frozen values from independent integer arithmetic (1080p grid)
        assert of.element_count(kinds.LOCAL_ORTHOGONAL, 135, 240) == 1_101_600
        assert of.element_count(kinds.GLOBAL_1D, 135, 240) == 12_150_000
        assert of.element_count(kinds.ALL_PAIRS_4D, 135, 240) == 1_049_760_000
        assert of.element_count(kinds.LOCAL_ORTHOGONAL, 56, 128) == 243_712
        # per-pixel ratios at the 1080p grid
        lov = of.element_count(kinds.LOCAL_ORTHOGONAL, 135, 240)
        g1d = of.element_count(kinds.GLOBAL_1D, 135, 240)
        ap = of.element_count(kinds.ALL_PAIRS_4D, 135, 240)
        assert lov * 375 == g1d * 34
        assert lov * 32_400 == ap * 34
    _report("2 (complexity model)", t, "LOV:G1D = 34:375, LOV:AP = 34:32400")


def _oracle_volume_instance(seed):
    """Level-0 orthogonal bins, level-0 local2d block and global1d vs
    pure-gather oracles on one random instance."""
    rng = np.random.default_rng(seed)
    h, w, d = 16, 16, 8
    src = _unit_features(rng, (h, w, d))
    tgt = _unit_features(rng, (h, w, d))
    att = _identity_attended(tgt)
    pyr = of.build_pyramid(tgt)
    fx, fy = int(rng.integers(-3, 4)), int(rng.integers(-3, 4))
    flow = of.FlowField(np.full((h, w), float(fx)), np.full((h, w), float(fy)))
    inv = 1.0 / np.sqrt(d)
    ys, xs = np.mgrid[0:h, 0:w]

    def gather(m, yy, xx):
        return m[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]

    worst = 0.0
    vol = of.build_orthogonal_volume(src, att, flow)
    sched = of.LookupSchedule.default()
    for b, (off, lvl, _) in enumerate(sched.bins()):
        if lvl != 0:
            continue
        expected_h = np.einsum(
            "hwd,hwd->hw", src.data, gather(tgt.data, ys + fy, xs + fx + off)
        ) * inv
        expected_v = np.einsum(
            "hwd,hwd->hw", src.data, gather(tgt.data, ys + fy + off, xs + fx)
        ) * inv
        worst = max(worst, np.abs(vol.data[b] - expected_h).max())
        worst = max(worst, np.abs(vol.data[17 + b] - expected_v).max())

    local2d = of.build_local2d_volume(src, pyr, flow, radius=4)
    c = 0
    for dy in range(-4, 5):
        for dx in range(-4, 5):
            expected = np.einsum(
                "hwd,hwd->hw", src.data, gather(tgt.data, ys + fy + dy, xs + fx + dx)
            ) * inv
            worst = max(worst, np.abs(local2d[c] - expected).max())
            c += 1

    g1d = of.build_global1d_volume(src, tgt)
    expect_h = np.einsum("ywd,yjd->jyw", src.data, tgt.data) * inv
    expect_v = np.einsum("ywd,iwd->iyw", src.data, tgt.data) * inv
    worst = max(worst, np.abs(g1d[:w] - expect_h).max())
    worst = max(worst, np.abs(g1d[w:] - expect_v).max())
    return worst, vol.data


def test_criterion_3_oracle_equivalence():
    with _Timer(budget=10.0) as t:
        worst = 0.0
        for seed in range(20):
            err, _ = _oracle_volume_instance(seed)
            worst = max(worst, err)
        assert worst < 1e-12
    _report("3 (brute-force oracle equivalence)", t, f"max err {worst:.2e}")


def test_criterion_4_gradient_suite():
    with _Timer(budget=60.0) as t:
        worst_att = max(attention_gradcheck(s).max_rel_error for s in range(20))
        worst_vol = max(volume_gradcheck(s).max_rel_error for s in range(20))
        assert worst_att < 1e-4
        assert worst_vol < 1e-4
    _report(
        "4 (gradient suite, 20 seeds each)",
        t,
        f"attention {worst_att:.2e}, volume {worst_vol:.2e}",
    )


def test_criterion_5_attention_properties():
    from orthoflow._kernels_numpy import _attention_weights

    with _Timer(budget=10.0) as t:
        rng = np.random.default_rng(7)
        cases = 0
        for _ in range(15):
            h = int(rng.integers(3, 9))
            w = int(rng.integers(3, 9))
            d = int(rng.integers(2, 6))
            radius = int(rng.integers(1, 4))
            data = rng.standard_normal((h, w, d))
            fm = of.FeatureMap(data)

            # radius 0: bit-exact identity
            out0 = of.local_axial_attention(fm, of.AttentionConfig(axis=of.VERTICAL, radius=0))
            np.testing.assert_array_equal(out0.data, data)
            cases += 1

            # constant input: identity
            const = of.FeatureMap(np.full((h, w, d), float(rng.uniform(-2, 2))))
            outc = of.local_axial_attention(
                const, of.AttentionConfig(axis=of.HORIZONTAL, radius=radius)
            )
            np.testing.assert_allclose(outc.data, const.data, atol=1e-9)
            cases += 1

            # softmax weights normalized within 1e-6 (both axes)
            for vertical in (True, False):
                weights = _attention_weights(data, data, radius, vertical, 1.0 / np.sqrt(d))
                assert weights.min() >= 0.0
                np.testing.assert_allclose(weights.sum(axis=0), 1.0, atol=1e-6)
                cases += 1

            # convex hull bound per pixel over the in-bounds window
            outv = of.local_axial_attention(
                fm, of.AttentionConfig(axis=of.VERTICAL, radius=radius)
            ).data
            for y in range(h):
                lo, hi = max(0, y - radius), min(h, y + radius + 1)
                window = data[lo:hi]
                assert np.all(outv[y] >= window.min(axis=0) - 1e-9)
                assert np.all(outv[y] <= window.max(axis=0) + 1e-9)
            cases += 1

            # transpose consistency (bit-identical)
            outh = of.local_axial_attention(
                of.FeatureMap(np.ascontiguousarray(data.transpose(1, 0, 2))),
                of.AttentionConfig(axis=of.HORIZONTAL, radius=radius),
            )
            np.testing.assert_array_equal(outv, outh.data.transpose(1, 0, 2))
            cases += 1
        assert cases >= 50
    _report("5 (attention properties)", t, f"{cases} randomized cases")


def test_criterion_6_end_to_end_convergence():
    with _Timer(budget=300.0) as t:
        rng = np.random.default_rng(2026)
        config = of.SolverConfig()
        draws = 40
        failures = []
        epes = []
        for i in range(draws):
            magnitude = float(rng.uniform(0.0, 100.0))
            angle = float(rng.uniform(0.0, 2 * np.pi))
            dx, dy = magnitude * np.cos(angle), magnitude * np.sin(angle)
            src, tgt, gt, valid = of.make_synthetic_pair(
                of.TextureSpec(seed=1000 + i), of.Translation(dx, dy), (448, 1024)
            )
            flow, _ = of.estimate_flow(src, tgt, config)
            epe = _interior_epe(flow, gt, valid)
            epes.append(epe)
            if epe > 2.0:
                failures.append((i, dx, dy, epe))
        pass_rate = (draws - len(failures)) / draws

        # reach ablation on the 96-px case: default succeeds,
        # fine-bins-only fails
        src, tgt, gt, valid = of.make_synthetic_pair(
            of.TextureSpec(seed=77), of.Translation(96.0, 0.0), (448, 1024)
        )
        flow, _ = of.estimate_flow(src, tgt, config)
        epe_default = _interior_epe(flow, gt, valid)
        truncated = of.SolverConfig(schedule=of.LookupSchedule.level0_only())
        flow0, _ = of.estimate_flow(src, tgt, truncated)
        epe_level0 = _interior_epe(flow0, gt, valid)

        assert pass_rate >= 0.95, f"failures: {failures}"
        assert epe_default <= 2.0
        assert epe_level0 > 2.0
    _report(
        "6 (end-to-end convergence)",
        t,
        f"{pass_rate * 100:.0f}% of {draws} draws <= 2px (median "
        f"{np.median(epes):.2f}px); 96px reach {epe_default:.2f}px vs "
        f"level0-only {epe_level0:.1f}px",
    )


def test_criterion_7_metrics_and_loss():
    with _Timer(budget=5.0) as t:
        # (3,4) offset: EPE 5, all outliers
        gt = of.FlowField.zeros(6, 6, dtype=np.float64)
        flow = of.FlowField(np.full((6, 6), 3.0), np.full((6, 6), 4.0))
        report = of.evaluate(flow, gt, np.ones((6, 6), dtype=bool))
        assert report.epe == 5.0
        assert report.f1_all == 100.0

        # random fields against a straight-line per-pixel oracle
        rng = np.random.default_rng(11)
        gt = of.FlowField(rng.standard_normal((8, 8)) * 20, rng.standard_normal((8, 8)) * 20)
        est = of.FlowField(gt.u + rng.standard_normal((8, 8)), gt.v + rng.standard_normal((8, 8)))
        valid = np.ones((8, 8), dtype=bool)
        report = of.evaluate(est, gt, valid)
        du, dv = est.u - gt.u, est.v - gt.v
        epe_map = np.sqrt(du**2 + dv**2)
        mag = np.hypot(gt.u, gt.v)
        assert abs(report.epe - epe_map.mean()) < 1e-9
        expected_f1 = 100.0 * np.mean((epe_map > 3.0) & (epe_map > 0.05 * mag))
        assert abs(report.f1_all - expected_f1) < 1e-9

        # sequence loss oracle and the two-term hand sum
        seq = [
            of.FlowField(gt.u + 0.25, gt.v - 0.5),
            of.FlowField(gt.u - 1.0, gt.v),
        ]
        loss = of.sequence_loss(seq, gt, gamma=0.8)
        expected = 0.8 * np.mean(np.abs(0.25) + np.abs(-0.5)) + 1.0 * np.mean(1.0)
        assert abs(loss - expected) < 1e-9
        flat = of.FlowField(gt.u + 0.5, gt.v + 0.5)
        assert abs(of.sequence_loss([flat, flat], gt, gamma=0.8) - 1.8) < 1e-9
    _report("7 (metrics and loss oracles)", t)


def test_criterion_8_flo_round_trip(tmp_path):
    import struct

    with _Timer(budget=5.0) as t:
        rng = np.random.default_rng(5)
        path = tmp_path / "roundtrip.flo"
        for i in range(1000):
            h = int(rng.integers(1, 5))
            w = int(rng.integers(1, 5))
            flow = of.FlowField(
                (rng.standard_normal((h, w)) * 1e3).astype(np.float32),
                (rng.standard_normal((h, w)) * 1e3).astype(np.float32),
            )
            of.write_flo(flow, path)
            back = of.read_flo(path)
            assert np.array_equal(back.u, flow.u) and np.array_equal(back.v, flow.v)
        golden = tmp_path / "golden.flo"
        of.write_flo(of.FlowField(np.array([[1.5]]), np.array([[-2.0]])), golden)
        assert golden.read_bytes() == struct.pack("<fiiff", 202021.25, 1, 1, 1.5, -2.0)
    _report("8 (.flo round trip, 1000 flows)", t)


def test_criterion_9_thread_determinism():
    if backend.active_backend() != "numba":
        pytest.skip("thread count only varies on the numba backend")

    def representative_results():
        out = {}
        _, out["volume"] = _oracle_volume_instance(3)
        out["grad"] = np.float64(volume_gradcheck(1).max_rel_error)
        rng = np.random.default_rng(9)
        data = rng.standard_normal((10, 12, 5))
        out["attention"] = of.local_axial_attention(
            of.FeatureMap(data), of.AttentionConfig(axis=of.VERTICAL, radius=3)
        ).data
        src, tgt, gt, valid = of.make_synthetic_pair(
            of.TextureSpec(seed=21), of.Translation(12.0, -6.0), (224, 512)
        )
        flow, seq = of.estimate_flow(src, tgt, of.SolverConfig(iterations=8))
        out["flow_u"] = flow.u
        out["flow_v"] = flow.v
        out["epe"] = np.float64(_interior_epe(flow, gt, valid))
        out["loss"] = np.float64(of.sequence_loss(seq, gt))
        return out

    with _Timer(budget=120.0) as t:
        backend.set_threads(1)
        single = representative_results()
        threads = backend.set_threads(2)
        multi = representative_results()
        for key in single:
            assert np.array_equal(single[key], multi[key]), f"{key} differs across thread counts"
    _report("9 (thread-count determinism)", t, f"1 vs {threads} threads")
