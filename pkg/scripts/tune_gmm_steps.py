"""Pick each method's GMM step size on held-out instances.

Runs the gmm-cov protocol on a seed disjoint from the evaluation seed for
a grid of step settings per method and prints the mean covariance error
per m, with the best setting per method (lowest mean over m) marked.

    python scripts/tune_gmm_steps.py --seed 1000 --threads 4
"""

import argparse

import numpy as np

from codps.experiments import _gmm_task, build_schedule, resolve_config

GRID = {
    "codps": [{"zeta_rule": "matched", "zeta_scale": str(s)} for s in (0.5, 1, 2, 3, 4, 5)],
    "codps_simplified": [{"zeta_rule": "matched", "zeta_scale": str(s)} for s in (0.5, 1, 2, 3, 4)],
    "dps": [
        {"zeta_rule": "piecewise", "zeta_hi": str(z), "zeta_lo": str(z), "step_rule": "normalized"}
        for z in (0.03, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0)
    ]
    + [
        {"zeta_rule": "matched", "zeta_scale": str(s), "step_rule": "plain"}
        for s in (0.0003, 0.001, 0.002, 0.003, 0.005, 0.01)
    ],
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1000)
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    from concurrent.futures import ThreadPoolExecutor

    for method, grid in GRID.items():
        scores = []
        for setting in grid:
            raw = {"seed": args.seed, "seeds": args.seeds, "samples": args.samples}
            raw.update({f"{method}.{k}": v for k, v in setting.items()})
            cfg = resolve_config("gmm-cov", raw)
            schedule = build_schedule(cfg)
            chains = cfg["samples"] // cfg["seeds"]
            ms = list(range(2, cfg["n"]))
            with ThreadPoolExecutor(args.threads) as pool:
                futs = {
                    (m, s): pool.submit(_gmm_task, cfg, schedule, method, s, m, chains)
                    for m in ms
                    for s in range(cfg["seeds"])
                }
                per_m = []
                for m in ms:
                    errs = []
                    for s in range(cfg["seeds"]):
                        res = futs[(m, s)].result()
                        errs += [np.inf] if res is None else [e.frob_error for e in res.values()]
                    per_m.append(float(np.mean(errs)))
            scores.append((float(np.mean(per_m)), setting, per_m))
        best = min(range(len(scores)), key=lambda i: scores[i][0])
        for i, (avg, setting, per_m) in enumerate(scores):
            mark = "*" if i == best else " "
            vals = " ".join(f"{v:8.3f}" if np.isfinite(v) and v < 1e6 else "     div" for v in per_m)
            print(f"{mark} {method:17s} {setting} | {vals} | mean {avg:.3g}")
        print()


if __name__ == "__main__":
    main()
