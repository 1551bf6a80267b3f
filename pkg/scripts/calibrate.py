#!/usr/bin/env python3
"""Measure the margins behind every frozen threshold in tests/test_acceptance.py.

Runs the desk-scale experiments once and prints the observed values next to
the thresholds the acceptance suite asserts.  Slow (~10 minutes); the
acceptance tests re-run the same seeds, so the numbers printed here are the
numbers the suite will see.
"""

import argparse
import time

import numpy as np

import factorsense as fs
from factorsense.quadnet import QuadConfig
from factorsense.probes import SubspaceTracker
from factorsense.ripcheck import (estimate_rip, lemma_ip_residual,
                                  lemma_nuclear_ip_residual,
                                  lemma_nuclear_op_residual,
                                  lemma_opnorm_residual, symmetric_probe,
                                  truncated_rank1_deviation)
from factorsense.rng import substream
from factorsense.solvers import SolverConfig
from factorsense.xlab import preset_specs, run_experiment


def banner(name):
    print(f"\n=== {name} " + "=" * max(0, 60 - len(name)), flush=True)


def cal_fig12(workers, outdir):
    banner("fig1/2 trend (criterion 6)")
    t0 = time.time()
    spec = preset_specs("fig1", desk_scale=True, seed_base=0)[0]
    table = run_experiment(spec, f"{outdir}/fig1", workers=workers)
    for row in table.rows:
        print(f"  {row.label:14s} train={row.final_train_mean:.3e} "
              f"test={row.final_test_mean:.3e} (+-{row.final_test_std:.1e})")
    tests = [r.final_test_mean for r in table.rows]
    print(f"  monotone non-increasing: {all(b <= a + 1e-12 for a, b in zip(tests, tests[1:]))}")
    print(f"  test(1e-3) vs test(1)/3: {tests[-1]:.3e} <= {tests[0]/3:.3e}: "
          f"{tests[-1] <= tests[0]/3}")
    print(f"  max train: {max(r.final_train_mean for r in table.rows):.3e}")
    print(f"  [{time.time()-t0:.0f}s]")


def cal_fig3(steps):
    banner(f"fig3 trend at T={steps} (criterion 7)")
    t0 = time.time()
    gt = fs.sample_ground_truth(50, 5, mode="experiment", seed=0)
    ens = fs.sample_gaussian_ensemble(gt, 1250, seed=0)
    cfg = SolverConfig(init_scale=0.01, step_size=0.0025, n_steps=steps,
                       record_every=1000)
    traj = fs.run_gd(gt, ens, cfg)
    by_step = {c.step: c.test_error for c in traj.checkpoints}
    print(f"  test@1e4={by_step[10_000]:.3e} test@{steps}={by_step[steps]:.3e} "
          f"monotone end<=1e4: {by_step[steps] <= by_step[10_000]}")
    print(f"  [{time.time()-t0:.0f}s]")


def cal_fig4():
    banner("fig4 GD vs PGD (criterion 8)")
    t0 = time.time()
    pgd_final = {}
    for d in (40, 60):
        gt = fs.sample_ground_truth(d, 1, mode="experiment", seed=0)
        ens = fs.sample_gaussian_ensemble(gt, 5 * d, seed=0)
        cfg = SolverConfig(init_scale=1e-3, step_size=0.0025, n_steps=10_000,
                           record_every=100, stop_train_error=0.001)
        tgd = fs.run_gd(gt, ens, cfg)
        tpgd = fs.run_pgd(gt, ens, cfg)
        pgd_final[d] = tpgd.final.test_error
        print(f"  d={d}: gd test={tgd.final.test_error:.3e} "
              f"pgd test={tpgd.final.test_error:.3e} "
              f"ratio={tpgd.final.test_error / tgd.final.test_error:.1f}")
    print(f"  pgd(60) >= pgd(40): {pgd_final[60] >= pgd_final[40]}")
    print(f"  [{time.time()-t0:.0f}s]")


def cal_quadnet(steps):
    banner(f"quadnet recovery at T={steps} (criterion 10)")
    t0 = time.time()
    gt = fs.sample_ground_truth(30, 2, mode="experiment", seed=0)
    data = fs.gen_quad_data(gt, 20 * 30 * 2, seed=0)
    finals = {}
    for a in (1e-3, 1e-2):
        cfg = QuadConfig(init_scale=a, step_size=0.0025, n_steps=steps,
                         record_every=500, tau_mode="exact")
        traj = fs.run_algorithm1(gt, data, cfg)
        finals[a] = traj.final.test_error
        print(f"  alpha={a:g}: test={traj.final.test_error:.3e}")
    print(f"  alpha=1e-3 <= 0.05: {finals[1e-3] <= 0.05}; "
          f"alpha=1e-2 >= alpha=1e-3: {finals[1e-2] >= finals[1e-3]}")
    # tau estimated robustness
    cfg = QuadConfig(init_scale=1e-3, step_size=0.0025, n_steps=steps,
                     record_every=500, tau_mode="estimated")
    t_est = fs.run_algorithm1(gt, data, cfg)
    print(f"  tau estimated: test={t_est.final.test_error:.3e} "
          f"(ratio vs exact {t_est.final.test_error / finals[1e-3]:.2f})")
    print(f"  [{time.time()-t0:.0f}s]")


def cal_fig5(n, steps):
    banner(f"fig5 large-init SGD, n={n}, T={steps} (criterion 11)")
    t0 = time.time()
    for seed in (0, 1, 2):
        gt = fs.sample_ground_truth(50, 5, mode="experiment", seed=0)
        data = fs.gen_quad_data(gt, n, seed=seed)
        cfg = QuadConfig(init_scale=1.0, step_size=8e-5, n_steps=steps,
                         record_every=steps // 10, seed=seed)
        traj = fs.run_quad_sgd(gt, data, cfg)
        print(f"  seed={seed}: train={traj.final.train_error:.3e} "
              f"test={traj.final.test_error:.3e}")
    print(f"  [{time.time()-t0:.0f}s]")


def cal_probes():
    banner("probed small-init run (criterion 12)")
    t0 = time.time()
    gt = fs.sample_ground_truth(50, 5, mode="experiment", seed=0)
    ens = fs.sample_gaussian_ensemble(gt, 1250, seed=0)
    cfg = SolverConfig(init_scale=1e-3, step_size=0.0025, n_steps=10_000,
                       record_every=100)
    probe = SubspaceTracker(gt, cfg.step_size)
    traj = fs.run_gd(gt, ens, cfg, probe=probe)
    max_e, first_below = 0.0, None
    sandwich_bad = 0
    for cp in traj.checkpoints:
        if first_below is None:
            max_e = max(max_e, cp.diag.norm_E)
            if cp.test_error < 0.1:
                first_below = cp.step
        if cp.diag.sandwich_ok is False:
            sandwich_bad += 1
    print(f"  max ||E|| before test<0.1: {max_e:.3e} "
          f"(bound 100*alpha = {100 * cfg.init_scale:.1e}); "
          f"first test<0.1 at t={first_below}")
    print(f"  sandwich violations: {sandwich_bad}; "
          f"final test={traj.final.test_error:.3e}")
    print(f"  [{time.time()-t0:.0f}s]")


def cal_rip():
    banner("RIP estimation (criterion 3)")
    t0 = time.time()
    gt = fs.sample_ground_truth(30, 2, mode="experiment", seed=1)
    big = fs.sample_gaussian_ensemble(gt, 6000, seed=1)
    small = fs.sample_gaussian_ensemble(gt, 100, seed=1)
    r_big = estimate_rip(big, 2, 500, seed=1)
    r_small = estimate_rip(small, 2, 500, seed=1)
    print(f"  delta(m=6000)={r_big.delta_hat:.3f} (<0.35) "
          f"delta(m=100)={r_small.delta_hat:.3f} (>0.5)")
    means = {}
    for m in (400, 4000):
        gt20 = fs.sample_ground_truth(20, 2, mode="experiment", seed=0)
        vals = [estimate_rip(fs.sample_gaussian_ensemble(gt20, m, seed=s), 2,
                             200, seed=s).delta_hat for s in range(5)]
        means[m] = float(np.mean(vals))
        print(f"  mean delta(m={m}) over 5 seeds: {means[m]:.3f}")
    print(f"  monotone: {means[4000] < means[400]}")
    print(f"  [{time.time()-t0:.0f}s]")
    return r_big.delta_hat


def cal_lemmas(delta_hat):
    banner("lemma oracles (criterion 4)")
    t0 = time.time()
    gt = fs.sample_ground_truth(20, 2, mode="experiment", seed=3)
    ens = fs.sample_gaussian_ensemble(gt, 5000, seed=3)
    d1 = estimate_rip(ens, 1, 300, seed=3).delta_hat
    d2 = estimate_rip(ens, 2, 300, seed=3).delta_hat
    rng = substream(7, "rip-probes")
    slack = 1.5
    fails = {"ip": 0, "op": 0, "nuc_ip": 0, "nuc_op": 0}
    for _ in range(100):
        x = symmetric_probe(20, 2, rng)
        y = symmetric_probe(20, 2, rng)
        r_mat = rng.standard_normal((20, 20))
        full = rng.standard_normal((20, 20))
        full = (full + full.T) / 2
        u_mat = rng.standard_normal((20, 20))
        if lemma_ip_residual(ens, x, y).value > slack * d2:
            fails["ip"] += 1
        if (lemma_opnorm_residual(ens, x, r_mat).value
                > slack * d2 * np.linalg.norm(r_mat, 2)):
            fails["op"] += 1
        nuc = np.abs(np.linalg.eigvalsh(full)).sum()
        if lemma_nuclear_ip_residual(ens, full, y).value > slack * d1 * nuc:
            fails["nuc_ip"] += 1
        bound = slack * d1 * nuc * np.linalg.norm(u_mat, 2) * np.linalg.norm(r_mat, 2)
        if lemma_nuclear_op_residual(ens, full, r_mat, left=u_mat) > bound:
            fails["nuc_op"] += 1
    print(f"  delta1={d1:.3f} delta2={d2:.3f} violations/100: {fails}")
    print(f"  [{time.time()-t0:.0f}s]")


def cal_truncated():
    banner("truncated rank-1 concentration (criterion 5)")
    t0 = time.time()
    rng = substream(11, "quad-data")
    xs = rng.standard_normal((60_000, 25))
    a = rng.standard_normal(25)
    a /= np.linalg.norm(a)
    x = np.outer(a, a)
    dev = truncated_rank1_deviation(xs, x, 25.0)
    print(f"  deviation={dev:.3f} vs 0.2*||X||_* = 0.2")
    xs2 = substream(12, "quad-data").standard_normal((50_000, 25))
    eye_dev = truncated_rank1_deviation(xs2, np.eye(25) / 25, 1e18)
    print(f"  untruncated X=I/d deviation={eye_dev:.3f} (<= 0.5)")
    print(f"  [{time.time()-t0:.0f}s]")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--outdir", default="/tmp/factorsense_calibration")
    ap.add_argument("--fig3-steps", type=int, default=30_000)
    ap.add_argument("--quad-steps", type=int, default=8_000)
    ap.add_argument("--fig5-n", type=int, default=300)
    ap.add_argument("--fig5-steps", type=int, default=400_000)
    ap.add_argument("--only", nargs="*", default=None)
    args = ap.parse_args()

    jobs = {
        "rip": lambda: cal_lemmas(cal_rip()),
        "truncated": cal_truncated,
        "fig4": cal_fig4,
        "quadnet": lambda: cal_quadnet(args.quad_steps),
        "fig5": lambda: cal_fig5(args.fig5_n, args.fig5_steps),
        "probes": cal_probes,
        "fig3": lambda: cal_fig3(args.fig3_steps),
        "fig12": lambda: cal_fig12(args.workers, args.outdir),
    }
    for name, job in jobs.items():
        if args.only and name not in args.only:
            continue
        job()


if __name__ == "__main__":
    main()
