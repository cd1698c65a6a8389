"""Acceptance gate: eleven numbered criteria, one verdict line each.

Every test emits a single "[criterion NN] PASS/FAIL ..." line (replayed in
the terminal summary by conftest) and then asserts the stated bound.
Reference targets are asserted exactly as given; where the model as
implemented does not reach a target, the test fails visibly rather than
loosening the bound.  Known misses and the numerical evidence behind them
are listed in the README.
"""

import math
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import quad

import conftest
from cawave import convergence as cv
from cawave import datasets as ds
from cawave import fem_core
from cawave import hybrid_solver as hs
from cawave import ryr_markov as rm
from cawave import surrogate_net as sn
from cawave.channel_flux import buffer_reaction, plasma_flux


def verdict(num, ok, detail):
    line = f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    conftest.ACCEPTANCE_VERDICTS.append(line)
    assert ok, line


def test_c01_flux_equilibrium():
    react = buffer_reaction(0.05, 37.0)
    outer = plasma_flux(0.05)
    ok = abs(react) <= 1e-12 and abs(outer) <= 1e-3
    verdict(1, ok, f"buffer reaction {react:.2e} (<=1e-12), outer flux {outer:.2e} (<=1e-3)")


def test_c02_markov_fixed_points():
    closed = rm.steady_state(0.0)
    closed_ok = (
        abs(closed.c1 - 1.0) <= 1e-12
        and abs(closed.o) <= 1e-12
        and abs(closed.c2) <= 1e-12
        and rm.open_probability(closed) <= 1e-12
    )
    rest = rm.steady_state(0.05)
    table = (0.994, 1.5721e-7, 5.6625e-3)
    rest_ok = (
        abs(rest.c1 - table[0]) <= 1e-2
        and abs(rest.o - table[1]) <= 1e-2
        and abs(rest.c2 - table[2]) <= 1e-2
    )
    state = rm.FULLY_CLOSED_STATE
    for _ in range(4000):
        state = rm.step_backward_euler(state, 0.05, 0.5)
    be_gap = max(abs(state.c1 - rest.c1), abs(state.o - rest.o), abs(state.c2 - rest.c2))
    ok = closed_ok and rest_ok and be_gap <= 1e-8
    verdict(2, ok, f"closed point exact, resting occupancies on table, BE gap {be_gap:.1e} (<=1e-8)")


def _hat_pair(mesh, i):
    nodes, h = mesh.nodes, mesh.h

    def phi(r):
        return max(0.0, 1.0 - abs(r - nodes[i]) / h)

    def dphi(r):
        if nodes[i] - h < r < nodes[i]:
            return 1.0 / h
        if nodes[i] < r < nodes[i] + h:
            return -1.0 / h
        return 0.0

    return phi, dphi


def test_c03_singular_assembly():
    worst_singular = 0.0
    worst_regular = 0.0
    for h in (0.0375, 0.1, 0.01):
        num = int(round(1.5 / h))
        mesh = fem_core.build_mesh(0.0, num * h, num)
        conv = fem_core.assemble_convection(mesh)
        worst_singular = max(
            worst_singular,
            abs(conv.diag[0] - (1.0 - math.log(h)) / h),
            abs(conv.upper[0] - (math.log(h) - 1.0) / h),
        )
        dense = conv.to_dense()
        for i in range(mesh.num_nodes):
            for j in (i - 1, i, i + 1):
                if j < 0 or j >= mesh.num_nodes or (i, j) in {(0, 0), (0, 1)}:
                    continue
                phi_i, _ = _hat_pair(mesh, i)
                _, dphi_j = _hat_pair(mesh, j)
                oracle = 0.0
                for e in range(max(0, max(i, j) - 1), min(min(i, j), num - 1) + 1):
                    val, _ = quad(
                        lambda r: phi_i(r) * dphi_j(r) / r,
                        mesh.nodes[e],
                        mesh.nodes[e + 1],
                        epsabs=1e-13,
                        epsrel=1e-13,
                    )
                    oracle += val
                worst_regular = max(worst_regular, abs(dense[i, j] - oracle))
    ok = worst_singular <= 1e-12 and worst_regular <= 1e-10
    verdict(
        3,
        ok,
        f"finite-part entries off by {worst_singular:.1e} (<=1e-12), "
        f"regular entries vs quadrature {worst_regular:.1e} (<=1e-10)",
    )


def test_c04_manufactured_solution_orders():
    rows = cv.run_convergence_study()
    orders = [r.order for r in rows if not math.isnan(r.order)]
    ok = len(orders) == 8 and all(o >= 1.9 for o in orders)
    verdict(4, ok, f"observed spatial orders {['%.2f' % o for o in orders]} (all >=1.9)")


def test_c05_gradient_check():
    rng = np.random.default_rng(42)
    params = sn.init_network(seed=1)

    def flatten(p):
        return np.concatenate([a.ravel() for pair in zip(p.weights, p.biases) for a in pair])

    def unflatten(vec):
        ws, bs, pos = [], [], 0
        for w, b in zip(params.weights, params.biases):
            ws.append(vec[pos : pos + w.size].reshape(w.shape))
            pos += w.size
            bs.append(vec[pos : pos + b.size])
            pos += b.size
        return sn.NetworkParams(ws, bs)

    theta0 = flatten(params)
    step = 1e-6
    total = bad = 0
    for _ in range(10):
        # resample until every hidden pre-activation clears the ReLU kink by
        # a margin, so the finite-difference stencil stays on one branch
        while True:
            x = np.array(
                [rng.uniform(0.05, 0.95), rng.uniform(0.1, 9.0), rng.uniform(-30.0, 30.0)]
            )
            a = x
            margins = []
            for w, b in zip(params.weights[:-1], params.biases[:-1]):
                z = w @ a + b
                margins.append(np.min(np.abs(z)))
                a = np.maximum(z, 0.0)
            if min(margins) > 1e-4:
                break
        batch = np.array([[x[0], x[1], x[2], rng.uniform(-1.0, 1.0)]])
        grads = sn.backward(params, batch)
        g_flat = flatten(sn.NetworkParams(list(grads[0]), list(grads[1])))
        for c in rng.choice(theta0.size, size=100, replace=False):
            tp, tm = theta0.copy(), theta0.copy()
            tp[c] += step
            tm[c] -= step
            fd = (sn.loss(unflatten(tp), batch) - sn.loss(unflatten(tm), batch)) / (2 * step)
            denom = max(abs(fd), abs(g_flat[c]), 1e-8)
            total += 1
            if abs(fd - g_flat[c]) / denom > 1e-5:
                bad += 1
    rate = 100.0 * (total - bad) / total
    ok = total == 1000 and rate >= 99.0
    verdict(5, ok, f"{total - bad}/{total} coordinates within 1e-5 of central differences ({rate:.1f}%)")


def test_c06_no_channel_ablation():
    cfg = hs.preset_config("example1", channel="zero", dt=0.01, t_end=4.0)
    out = hs.run_simulation(cfg)
    peak = out.peak_u_anywhere
    verdict(6, peak < 0.5, f"peak u anywhere = {peak:.5f} (bound < 0.5, dt=0.01)")


@pytest.fixture(scope="module")
def wave_peaks():
    peaks = {}
    for denom in (2500, 12500):
        cfg = hs.preset_config(
            "example1", dt=1.0 / denom, t_end=4.0, er_elements=80, cyto_elements=80,
            observer_stride=10,
        )
        peaks[denom] = hs.run_simulation(cfg).peak_u_l
    return peaks


def test_c07a_wave_amplitude(wave_peaks):
    peak = wave_peaks[2500]
    ok = 26.0 <= peak <= 38.0
    verdict(7, ok, f"peak u(L) = {peak:.5f} (target [26, 38], dt=1/2500, 80+80 elements)")


def test_c07b_wave_amplitude_stabilizes(wave_peaks):
    a, b = wave_peaks[2500], wave_peaks[12500]
    rel = abs(a - b) / max(a, b)
    verdict(7, rel <= 0.10, f"peaks {a:.4f} vs {b:.4f} at dt=1/2500 vs 1/12500 differ {100*rel:.2f}% (<=10%)")


def test_c08_desk_scale_surrogate():
    samples = ds.build_ode_dataset(num_signals=2600, seed=11)
    params, _ = sn.train(samples, epochs=20, batch_size=640, validation_fraction=0.10, seed=11)
    problems = []
    for sig in ds.gen_eval_signals():
        p = sn.rollout_probability(params, sig.u, ds.SIGNAL_DT, p0=0.0)
        if p.min() < 0.0 or p.max() > 1.0:
            problems.append(f"{sig.name}: P leaves [0,1]")
        swing = sig.amplitude - ds.BASELINE
        u_on = int(np.argmax(sig.u > ds.BASELINE + 0.01 * swing))
        if u_on > 0 and p[:u_on].max() >= 0.05:
            problems.append(f"{sig.name}: P={p[:u_on].max():.3f} before the signal moves")
        if sig.in_training_range:
            if p.max() < 0.05:
                problems.append(f"{sig.name}: no response")
            elif int(np.argmax(p >= 0.05)) <= u_on:
                problems.append(f"{sig.name}: P rises before u")
    verdict(8, not problems, "; ".join(problems) or "P in [0,1], quiet pre-onset, rise follows u on in-range signals")


def test_c09_surrogate_dt_insensitivity():
    samples = ds.series_to_samples(ds.gen_training_set_I())
    params, _ = sn.train(samples, epochs=100, batch_size=640, validation_fraction=0.10, seed=1)
    peaks, durations = [], []
    for dt in (1.0 / 80, 1.0 / 160):
        cfg = hs.preset_config("example1-reduced", channel="surrogate", network=params, dt=dt)
        out = hs.run_simulation(cfg)
        peaks.append(out.peak_u_l)
        durations.append(out.wave_duration)
    peak_rel = abs(peaks[0] - peaks[1]) / max(peaks)
    dur_rel = abs(durations[0] - durations[1]) / max(durations)
    ok = peak_rel <= 0.15 and dur_rel <= 0.25
    verdict(
        9,
        ok,
        f"peaks {peaks[0]:.4f}/{peaks[1]:.4f} differ {100*peak_rel:.1f}% (<=15%), "
        f"durations {durations[0]:.3f}/{durations[1]:.3f} differ {100*dur_rel:.1f}% (<=25%)",
    )


def test_c10_conservation():
    cfg = hs.preset_config("example1", dt=1e-3, t_end=1.0, plasma_enabled=False)
    cfg.stimulus = hs.StimulusSpec(amplitude=0.0)
    sys_ = hs.build_system(cfg)
    state = hs.make_initial_state(cfg, sys_)
    q0 = hs.conserved_quantity(state)
    for _ in range(1000):
        state = hs.step_imex(state, cfg, sys_)
    rel = abs(hs.conserved_quantity(state) - q0) / abs(q0)
    verdict(10, rel <= 1e-3, f"|dQ|/|Q0| = {rel:.2e} over 1000 sealed steps (<=1e-3)")


def test_c11_determinism(tmp_path):
    base = [sys.executable, "-m", "cawave"]
    jobs = {
        "gen-data": ["gen-data", "--set", "ode", "--signals", "30", "--seed", "12"],
        "train": None,  # filled in after gen-data produces the dataset
        "simulate": ["simulate", "--preset", "example1", "--channel", "markov",
                     "--dt", "0.01", "--t-end", "0.2"],
    }
    outputs = {"gen-data": "ode_dataset.cwds", "train": "weights.cwnn", "simulate": "simulation.csv"}
    mismatches = []
    for name in ("gen-data", "train", "simulate"):
        blobs = []
        for sub in ("a", "b"):
            out_dir = tmp_path / f"{name}-{sub}"
            args = jobs[name]
            if name == "train":
                args = ["train", "--data", str(tmp_path / "gen-data-a" / "ode_dataset.cwds"),
                        "--epochs", "1", "--subset", "1000", "--seed", "12"]
            proc = subprocess.run(
                base + args + ["--out", str(out_dir)],
                cwd=tmp_path, capture_output=True, text=True, timeout=600,
            )
            assert proc.returncode == 0, proc.stderr
            blobs.append((out_dir / outputs[name]).read_bytes())
        if blobs[0] != blobs[1]:
            mismatches.append(name)
    verdict(11, not mismatches, "gen-data/train/simulate reruns byte-identical" if not mismatches else f"mismatch in {mismatches}")
