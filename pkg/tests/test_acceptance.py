"""End-to-end acceptance checks.

Each test exercises one headline property of the package and prints a
single PASS/FAIL line so the whole suite doubles as a report.
"""

import numpy as np

from zobench.checks import grad_check
from zobench.data import generate_dataset
from zobench.harness import RunConfig, compare_grid, run_experiment
from zobench.ledger import AllocationLedger
from zobench.memmodel import GB, estimate_footprint
from zobench.model import ModelConfig, forward_loss, init_model, toy_config
from zobench.probes import probe_stats
from zobench.zo import ZoConfig, zo_step

GB_DEC = 1e9


def _report(n, name, ok, detail=""):
    line = f"criterion {n} ({name}): {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" [{detail}]"
    print(line)
    assert ok, line


def test_criterion_01_gradient_oracle():
    max_rel, checked = grad_check(samples=200, h=1e-4, seed=0)
    _report(1, "gradient oracle", checked >= 200 and max_rel <= 1e-4,
            f"max rel err {max_rel:.3e} over {checked} coords")


def test_criterion_02_estimator_consistency():
    small = probe_stats(50, 1_000, seed=0)
    large = probe_stats(50, 100_000, seed=0)
    ok = small.cosine >= 0.9 and large.cosine >= 0.99
    _report(2, "estimator consistency", ok,
            f"cosine {small.cosine:.4f} @1e3, {large.cosine:.4f} @1e5")


def test_criterion_03_memory_ceiling():
    # extra bytes beyond weights + forward working set, across three
    # parameter scales and two batch sizes
    extras = []
    for dim in (20, 64, 200):          # ~1e4 / ~1e5 / ~1e6 parameters
        cfg = ModelConfig(vocab_size=50, dim=dim, layers=2, heads=2,
                          seq_len=16, classes=2, dtype="f32")
        for bsz in (8, 64):
            led = AllocationLedger()
            params = init_model(cfg, 0, led)
            batch = generate_dataset("parity", bsz, cfg.vocab_size,
                                     cfg.seq_len, 2, batch_size=bsz)[0]
            zo_step(params, lambda p: forward_loss(p, batch, led),
                    ZoConfig(lr=1e-3), 0, led)
            snap = led.peak_snapshot()
            extras.append(snap["total"] - snap["weights"] - snap["activation"]
                          + snap["transient"])
    lo, hi = min(extras), max(extras)
    ok = hi <= 1.05 * lo if lo > 0 else hi == lo
    _report(3, "seed-replay memory ceiling", ok,
            f"extras {sorted(set(extras))} bytes across 6 configs")


def test_criterion_04_grid_oom_pattern():
    base = RunConfig(steps=3, data_size=64, seed=0, simulated_budget=8_000_000)
    cells = compare_grid(base, ["mezo", "adam"], [8, 64])
    verdicts = {(c.optimizer, c.batch_size): c.verdict for c in cells}
    ok = verdicts == {("mezo", 8): "ok", ("adam", 8): "ok",
                      ("mezo", 64): "ok", ("adam", 64): "oom"}
    _report(4, "grid OOM pattern", ok, f"{verdicts}")


def test_criterion_05_activation_linearity():
    peaks = {}
    for bsz in (8, 64):
        rep = run_experiment(RunConfig(opt_kind="adam", batch_size=bsz,
                                       steps=2, data_size=bsz, seed=0))
        peaks[bsz] = rep.peaks["activation"]
    ratio = peaks[64] / peaks[8]
    _report(5, "activation linearity", abs(ratio - 8.0) <= 0.8,
            f"B64:B8 activation ratio {ratio:.3f}")


def test_criterion_06_device_scale_predictions():
    est8 = estimate_footprint("roberta-large", "adam", 8)
    in_band = 0.75 * 6.5 * GB_DEC <= est8.total <= 1.25 * 6.7 * GB_DEC
    est64 = estimate_footprint("roberta-large", "adam", 64, budget=12 * GB)
    zo = estimate_footprint("opt-1.3b", "mezo", 8)
    zo_ok = 5.2 * GB_DEC <= zo.total <= 6.5 * GB_DEC
    ok = in_band and est64.verdict == "oom" and zo_ok
    _report(6, "device-scale analytic reproduction", ok,
            f"355M adam B8 {est8.total / GB_DEC:.2f} GB, "
            f"B64@12GB {est64.verdict}, 1.3B zo {zo.total / GB_DEC:.2f} GB")


def test_criterion_07_loss_trajectories():
    losses = {}
    for kind in ("mezo", "adam"):
        rep = run_experiment(RunConfig(opt_kind=kind, batch_size=8,
                                       steps=100, data_size=8, seed=0))
        losses[kind] = np.array([r.loss for r in rep.records])
    both_reduce = all(l[-1] < l[0] for l in losses.values())
    adam_faster = losses["adam"][-1] < losses["mezo"][-1]
    trailing = np.convolve(losses["mezo"], np.ones(10) / 10, mode="valid")
    monotone = np.diff(trailing).max() <= 0.02
    ok = both_reduce and adam_faster and monotone
    _report(7, "loss trajectory ordering", ok,
            f"mezo {losses['mezo'][0]:.4f}->{losses['mezo'][-1]:.4f}, "
            f"adam ->{losses['adam'][-1]:.4f}, "
            f"worst trailing-mean rise {np.diff(trailing).max():.4f}")


def test_criterion_08_step_timing():
    def mean_ms(kind, bsz):
        rep = run_experiment(RunConfig(opt_kind=kind, batch_size=bsz,
                                       steps=12, data_size=bsz, seed=0))
        return rep.timing_ms["mean"]

    batch_votes, ratio_votes, detail = 0, 0, []
    for _ in range(3):
        zo8, zo64, ad8 = mean_ms("mezo", 8), mean_ms("mezo", 64), mean_ms("adam", 8)
        batch_votes += zo64 > zo8
        ratio = zo8 / ad8
        ratio_votes += 0.5 <= ratio <= 2.0
        detail.append(f"zo8={zo8:.1f} zo64={zo64:.1f} ad8={ad8:.1f} r={ratio:.2f}")
    ok = batch_votes >= 2 and ratio_votes >= 2
    _report(8, "per-step timing", ok, "; ".join(detail))


def test_criterion_09_parallel_equivalence():
    import time
    cfg = toy_config()
    batch = generate_dataset("marker-detect", 8, cfg.vocab_size, cfg.seq_len,
                             1, batch_size=8)[0]
    led_s, led_p = AllocationLedger(), AllocationLedger()
    ps, pp = init_model(cfg, 7, led_s), init_model(cfg, 7, led_p)
    t0 = time.perf_counter()
    zo_step(ps, lambda p: forward_loss(p, batch, led_s),
            ZoConfig(lr=2e-2, probes=4), 0, led_s)
    t_serial = time.perf_counter() - t0
    t0 = time.perf_counter()
    zo_step(pp, lambda p: forward_loss(p, batch, led_p),
            ZoConfig(lr=2e-2, probes=4, parallel=True, workers=4), 0, led_p)
    t_par = time.perf_counter() - t0
    bitwise = np.array_equal(ps.values, pp.values)
    transient = led_p.peak("transient")
    replicas = 4 * pp.nbytes
    transient_ok = replicas <= transient <= replicas + 4 * 8192 * 4
    ok = bitwise and transient_ok
    _report(9, "parallel-probe equivalence", ok,
            f"bitwise={bitwise}, transient={transient} B "
            f"(replicas {replicas} B), speedup x{t_serial / t_par:.2f} (recorded)")


def test_criterion_10_determinism_and_schema(tmp_path):
    from zobench.harness import CSV_HEADER
    import csv as csvmod
    import io
    import json
    header_ok = CSV_HEADER == ("step,loss,loss_evaluations,elapsed_ms,"
                               "peak_weights,peak_grads,peak_optstate,"
                               "peak_activation,peak_transient,peak_total")
    outs = []
    for i in range(2):
        d = tmp_path / str(i)
        run_experiment(RunConfig(opt_kind="mezo", batch_size=4, steps=5,
                                 data_size=16, seed=2, out_dir=str(d)))
        outs.append((d / "steps.csv").read_text())
    rows = [[line.split(",") for line in text.splitlines()] for text in outs]
    same = all(ra[:3] == rb[:3] and ra[4:] == rb[4:]
               for ra, rb in zip(rows[0], rows[1]))
    summary = json.loads((tmp_path / "0" / "summary.json").read_text())
    reader = csvmod.DictReader(io.StringIO(outs[0]))
    csv_rows = list(reader)
    totals_ok = (summary["steps_completed"] == len(csv_rows)
                 and summary["final_loss"] == float(csv_rows[-1]["loss"])
                 and summary["peaks"]["total"] == int(csv_rows[-1]["peak_total"]))
    ok = header_ok and same and totals_ok
    _report(10, "determinism & schema", ok,
            f"header={header_ok}, repeatable={same}, json==csv={totals_ok}")
