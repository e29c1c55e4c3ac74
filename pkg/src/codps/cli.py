"""Command-line front end.

    codps op-check --out results/ops
    codps gmm-cov --config gmm.cfg --threads 4 --out results/gmm
    codps gaussian-posterior --nfe 100 --chains 200
    codps restore --set operator=sr --set factor=2

Values come from built-in defaults, then ``--config``, then ``--set``, then
explicit flags. Exit status: 0 success, 1 validation failure, 2 bad config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from codps.exceptions import CodpsError, ConfigError
from codps.experiments import (
    resolve_config,
    run_gaussian_posterior,
    run_gmm_cov,
    run_op_check,
    run_restore_toy,
)
from codps.io import load_config

log = logging.getLogger("codps")

# flag dest -> config key
_FLAG_KEYS = {
    "seed": "seed",
    "threads": "threads",
    "sampler": "sampler",
    "eta": "eta",
    "nfe": "nfe",
    "chains": "chains",
    "record_trajectory": "record_trajectory",
    "T": "T",
    "beta_start": "beta_start",
    "beta_end": "beta_end",
    "sigma_tilde": "sigma_tilde",
    "method": "method",
    "sigma0_sq": "sigma0_sq",
    "sigma_n": "sigma_n",
    "zeta_hi": "zeta_hi",
    "zeta_lo": "zeta_lo",
    "zeta_switch_t": "zeta_switch_t",
    "r_t_rule": "r_t_rule",
    "gamma_mode": "gamma_mode",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run")
    g.add_argument("--config", help="flat key = value config file")
    g.add_argument("--out", default="results", help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    g.add_argument("-v", "--verbose", action="store_true")
    s = p.add_argument_group("sampler")
    s.add_argument("--sampler", choices=("ddpm", "ddim"))
    s.add_argument("--eta", type=float)
    s.add_argument("--nfe", type=int)
    s.add_argument("--chains", type=int)
    s.add_argument("--record-trajectory", dest="record_trajectory", action="store_const",
                   const=True)
    d = p.add_argument_group("schedule and guidance")
    d.add_argument("--T", dest="T", type=int)
    d.add_argument("--beta-start", dest="beta_start", type=float)
    d.add_argument("--beta-end", dest="beta_end", type=float)
    d.add_argument("--sigma-tilde", dest="sigma_tilde", choices=("beta", "posterior_beta"))
    d.add_argument("--method", choices=("codps", "codps_simplified", "dps", "pigdm"))
    d.add_argument("--sigma0-sq", dest="sigma0_sq")
    d.add_argument("--sigma-n", dest="sigma_n", type=float)
    d.add_argument("--zeta-hi", dest="zeta_hi", type=float)
    d.add_argument("--zeta-lo", dest="zeta_lo", type=float)
    d.add_argument("--zeta-switch-t", dest="zeta_switch_t", type=int)
    d.add_argument("--r-t-rule", dest="r_t_rule")
    d.add_argument("--gamma-mode", dest="gamma_mode",
                   choices=("corrected", "paper_literal", "infinite_variance"))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="codps", description="Covariance-corrected diffusion posterior sampling")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common_flags()
    sub.add_parser("gmm-cov", parents=[common], help="GMM covariance-error sweep")
    sub.add_parser("gaussian-posterior", parents=[common], help="conjugate Gaussian end-to-end check")
    sub.add_parser("op-check", parents=[common], help="fast inversions vs dense oracle")
    sub.add_parser("restore", parents=[common], help="toy image restoration")
    return parser


def _raw_config(args) -> dict:
    raw = load_config(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            raw[key] = value
    return raw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, _raw_config(args))
        if args.command == "op-check":
            rows = run_op_check(cfg, args.out)
            for r in rows:
                print(f"{r['operator']:10s} max_rel_error={r['max_rel_error']:.3e} "
                      f"{'PASS' if r['passed'] else 'FAIL'}")
            return 0 if all(r["passed"] for r in rows) else 1
        if args.command == "gmm-cov":
            curve = run_gmm_cov(cfg, args.out)
            for method, errs in curve.errors.items():
                print(f"{method:17s} " + " ".join(f"m={m}:{e:.4g}" for m, e in zip(curve.m_values, errs)))
            return 0
        if args.command == "gaussian-posterior":
            report = run_gaussian_posterior(cfg, args.out)
            print(json.dumps({k: report[k] for k in
                              ("fraction_within_3se", "max_abs_z", "rel_mean_error", "passed")}))
            return 0 if report["passed"] else 1
        rows = run_restore_toy(cfg, args.out)
        for r in rows:
            print(f"seed={r['seed']} psnr={r['psnr']:.2f}dB observed_rms={r['observed_rms']:.4f}")
        return 0 if all(r["finite"] for r in rows) else 1
    except ConfigError as exc:
        print(f"codps: config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        # unreadable inputs and invalid parameter ranges are config problems
        print(f"codps: config error: {exc}", file=sys.stderr)
        return 2
    except CodpsError as exc:
        print(f"codps: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
