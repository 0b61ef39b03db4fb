"""Command-line front end: ``sigvol <command> [options]``.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = ["main", "build_parser", "resolve_model_path"]


class UsageError(Exception):
    pass


def resolve_model_path(name: str) -> Path:
    """A file path, or the name of a bundled config (``stein_stein``, ``heston``, ...)."""
    p = Path(name)
    if p.is_file():
        return p
    bundled = resources.files("sigvol") / "configs"
    for cand in (p.name, p.name + ".toml", p.name + ".json"):
        f = bundled / cand
        if f.is_file():
            return Path(str(f))
    raise UsageError(f"model config not found: {name}")


def _strikes(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        K = np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise UsageError(f"--strikes expects lo:hi:n, got {text!r}")
    if K.size < 1 or np.any(K <= 0):
        raise UsageError("strikes must be positive")
    return K


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}")


def _load_spec(args, T=None):
    from .models import load_model_config, spec_from_config

    path = resolve_model_path(args.model)
    try:
        cfg = load_model_config(path)
    except Exception as exc:  # malformed file
        raise UsageError(f"cannot read {path}: {exc}")
    if args.order is not None:
        cfg["M"] = args.order
    try:
        return spec_from_config(cfg, T), cfg
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid model config {path}: {exc}")


def _emit(args, payload, rows=None, header=None):
    """Write JSON (``payload``) or CSV (``rows``) to ``--out`` or stdout."""
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2, default=_json_default) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def _order_tilde(args, spec):
    return args.tilde_order if args.tilde_order is not None else 2 * spec.order


# commands


def cmd_price(args):
    from .fourier import PricingRequest, choose_sigma_bs, implied_vol, lewis_price, solve_for_pricing

    T = args.maturity
    spec, _ = _load_spec(args, T)
    Mt = _order_tilde(args, spec)
    K = np.asarray(args.strike if args.strike else [1.0], dtype=float)
    sol, rule = solve_for_pricing(spec, T, "european", args.quad, args.ode_steps, Mt)
    sbs = choose_sigma_bs(spec, T, J=args.ode_steps)
    kind = f"european_{args.kind}"
    res = lewis_price(sol, PricingRequest(K, T, kind, sigma_bs=sbs), rule, return_result=True)
    price = np.atleast_1d(res.price)
    iv = implied_vol(price, 1.0, K, T, args.kind, errors="nan")
    reports = [
        {"product": kind, "T": T, "K": float(k), "price": float(p), "implied_vol": float(v), "L": args.quad,
         "M": spec.order, "M_tilde": Mt, "J": args.ode_steps, "sigma_bs": sbs, "clamped": bool(c)}
        for k, p, v, c in zip(K, price, iv, res.clamped)
    ]
    _emit(args, reports if len(reports) > 1 else reports[0],
          [(r["K"], r["price"], r["implied_vol"]) for r in reports], ["strike", "price", "implied_vol"])


def cmd_smile(args):
    from .fourier import smile

    T = args.maturity
    spec, _ = _load_spec(args, T)
    K = _strikes(args.strikes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        iv, res = smile(spec, T, K, args.quad, args.ode_steps, _order_tilde(args, spec), return_prices=True)
    rows = list(zip(K, iv))
    _emit(args, {"T": T, "M": spec.order, "strikes": K, "implied_vols": iv, "prices": res.price,
                 "clamped": res.clamped, "sigma_bs": res.info["sigma_bs"]}, rows, ["strike", "implied_vol"])


def cmd_swap(args):
    from .fourier import qvol_swap_strike, variance_swap_strike

    T = args.maturity
    spec, _ = _load_spec(args, T)
    out = {"T": T, "M": spec.order, "variance_swap": variance_swap_strike(spec, T)}
    if args.q < 1:
        out["q"] = args.q
        out["qvol_swap"] = qvol_swap_strike(spec, T, args.q, J=args.ode_steps, order=_order_tilde(args, spec))
    _emit(args, out, [(k, v) for k, v in out.items()], ["quantity", "value"])


def cmd_asian(args):
    from .fourier import PricingRequest, asian_price, choose_sigma_bs, solve_for_pricing

    T = args.maturity
    spec, _ = _load_spec(args, T)
    Mt = _order_tilde(args, spec)
    K = np.asarray(args.strike if args.strike else [1.0], dtype=float)
    sol, rule = solve_for_pricing(spec, T, "asian", args.quad, args.ode_steps, Mt)
    sbs = choose_sigma_bs(spec, T, kind="asian", J=args.ode_steps)
    res = asian_price(sol, PricingRequest(K, T, f"asian_{args.kind}", sigma_bs=sbs), rule, return_result=True)
    price = np.atleast_1d(res.price)
    reports = [{"product": f"asian_{args.kind}", "T": T, "K": float(k), "price": float(p), "L": args.quad,
                "M": spec.order, "M_tilde": Mt, "J": args.ode_steps, "sigma_bs": sbs, "clamped": bool(c)}
               for k, p, c in zip(K, price, res.clamped)]
    _emit(args, reports if len(reports) > 1 else reports[0], [(r["K"], r["price"]) for r in reports], ["strike", "price"])


def cmd_represent(args):
    from .models import OUParams, load_model_config
    from .montecarlo import representation_mse

    params = {"kappa": 4.0, "theta": 0.25, "eta": 2.0}
    if args.model:
        cfg = load_model_config(resolve_model_path(args.model))
        if cfg.get("family") not in ("ou", "stein_stein"):
            raise UsageError("represent supports OU configs only")
        params.update(cfg.get("params", {}))
    p = OUParams(**params)
    orders = [int(m) for m in _floats(args.orders)]
    horizons = _floats(args.horizons)
    tab = representation_mse(p, orders, horizons, n_paths=args.paths, steps_per_year=args.steps_per_year,
                             seed=args.seed, beta1=args.beta1, beta2=args.beta2)
    rows = []
    for M in orders:
        for h, e, r in zip(horizons, tab["exact"][M], tab["regression"][M]):
            rows.append((M, h, e, r))
    _emit(args, {"params": vars(p), "horizons": horizons, "orders": orders,
                 "exact": {str(k): v for k, v in tab["exact"].items()},
                 "regression": {str(k): v for k, v in tab["regression"].items()}},
          rows, ["M", "horizon", "mse_exact", "mse_regression"])


def _target(name, T, args):
    from .models import CIRParams, OUParams
    from .montecarlo import cir_path, ou_pathwise

    if name == "ou":
        p = OUParams(4.0, 0.25, 2.0)
        return lambda times, W: ou_pathwise(p, times, np.diff(W, axis=1))
    if name == "cir":
        p = CIRParams(2.0, 0.0625, 0.3)
        return lambda times, W: cir_path(p, times, np.diff(W, axis=1))
    if name == "inverse_cir":
        # 3/2 model: V = 1/Y with Y a square-root process driven by -W
        kappa, theta, eta, v0 = 2.0, 0.2, 0.5, 0.2
        q = CIRParams(kappa * theta, (kappa + eta**2) / (kappa * theta), eta, 1.0 / v0)
        return lambda times, W: 1.0 / np.maximum(cir_path(q, times, -np.diff(W, axis=1)), 1e-12)
    if name == "fbm":
        H = args.hurst

        def fbm(times, W):
            dW = np.diff(W, axis=1)
            mid = 0.5 * (times[1:] + times[:-1])
            out = np.zeros_like(W)
            for j in range(1, len(times)):
                ker = (times[j] - mid[:j]) ** (H - 0.5)
                out[:, j] = dW[:, :j] @ ker
            return out

        return fbm
    if name == "in_span":
        return lambda times, W: 0.2 + 0.5 * W - 0.3 * times[None, :] + 0.25 * (W**2 - times[None, :])
    raise UsageError(f"unknown target {name!r}")


def cmd_regress(args):
    from .models import RegressionConfig, fit_regression

    cfg = RegressionConfig(J=args.mc_steps, N=args.paths, M=args.order or 4, T=args.maturity,
                           beta1=args.beta1, beta2=args.beta2, seed=args.seed)
    res = fit_regression(_target(args.target, args.maturity, args), cfg)
    coeffs = [{"word": str(w), "value": float(v.real)} for w, v in res.coefficients.items(1e-14)]
    _emit(args, {"target": args.target, "M": cfg.M, "train_mse": res.train_mse, "sweeps": res.sweeps,
                 "coefficients": coeffs}, [(c["word"], c["value"]) for c in coeffs], ["word", "value"])


def cmd_hedge(args):
    from .fourier import PricingRequest
    from .hedging import simulate_hedge

    T = args.maturity
    spec, _ = _load_spec(args, T)
    Ks = args.strike if args.strike else [1.0]
    out = []
    for K in Ks:
        req = PricingRequest(float(K), T, args.product)
        rep = simulate_hedge(spec, req, args.rebalance, args.paths, args.seed, args.strategy, L=args.quad,
                             J=args.ode_steps, order=args.tilde_order, bs_sigma=args.bs_sigma)
        summ = rep.summary()
        summ.update(product=args.product, K=float(K), T=T)
        out.append(summ)
        if args.pnl_csv:
            path = Path(args.pnl_csv)
            if len(Ks) > 1:
                path = path.with_name(f"{path.stem}_K{K:g}{path.suffix}")
            rep.write_pnl_csv(path)
    _emit(args, out if len(out) > 1 else out[0], [(r["K"], r["X0"], r["J_hat"], r["J_se"]) for r in out],
          ["strike", "X0", "J_hat", "J_se"])


def cmd_calibrate(args):
    from .calibration import CalibrationConfig, calibrate_slice, load_slices

    if not args.data or not Path(args.data).is_file():
        raise UsageError(f"market data file not found: {args.data}")
    slices = load_slices(args.data)
    cfg = CalibrationConfig(M=args.order or 2, sigma0=args.sigma0, generations=args.generations,
                            seed=args.seed, L=args.quad, J=args.ode_steps, order=args.tilde_order)
    results = [calibrate_slice(s, cfg).to_dict() for s in slices]
    for r in results:
        r["coefficients"] = [{"word": str(c["word"]), "value": c["value"]} for c in r["coefficients"]]
    rows = [(r["maturity_days"], r["rho"], math.sqrt(r["loss"]), r["evaluations"]) for r in results]
    _emit(args, results, rows, ["maturity_days", "rho", "iv_rmse", "evaluations"])


def _common() -> argparse.ArgumentParser:
    # fresh per subcommand: argparse shares parent actions, so set_defaults would leak
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="stein_stein", help="model config path or bundled name")
    common.add_argument("--maturity", type=float, default=0.5, help="maturity in years")
    common.add_argument("--order", type=int, default=None, help="truncation order M (overrides the config)")
    common.add_argument("--tilde-order", type=int, default=None, help="Riccati working order (default 2M)")
    common.add_argument("--quad", type=int, default=64, help="Gauss-Laguerre nodes")
    common.add_argument("--ode-steps", type=int, default=100, help="RK4 steps")
    common.add_argument("--paths", type=int, default=100_000)
    common.add_argument("--mc-steps", type=int, default=252)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, default=None, help="worker cap (sets SIGVOL_THREADS)")

    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sigvol", description="Signature volatility models: pricing, hedging, calibration.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("price", parents=[_common()], help="European option prices")
    s.add_argument("--strike", type=float, nargs="*")
    s.add_argument("--kind", choices=("call", "put"), default="call")
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("smile", parents=[_common()], help="implied volatility smile")
    s.add_argument("--strikes", default="0.8:1.2:21")
    s.set_defaults(func=cmd_smile)

    s = sub.add_parser("swap", parents=[_common()], help="variance and q-volatility swap strikes")
    s.add_argument("--q", type=float, default=0.5)
    s.set_defaults(func=cmd_swap)

    s = sub.add_parser("asian", parents=[_common()], help="geometric Asian option prices")
    s.add_argument("--strike", type=float, nargs="*")
    s.add_argument("--kind", choices=("call", "put"), default="call")
    s.set_defaults(func=cmd_asian)

    s = sub.add_parser("represent", parents=[_common()], help="representation accuracy table for OU")
    s.set_defaults(model=None, paths=20_000)
    s.add_argument("--orders", default="2,4,6")
    s.add_argument("--horizons", default="0.25,0.5,1,2,4")
    s.add_argument("--steps-per-year", type=int, default=252)
    s.add_argument("--beta1", type=float, default=0.0)
    s.add_argument("--beta2", type=float, default=0.0)
    s.set_defaults(func=cmd_represent)

    s = sub.add_parser("regress", parents=[_common()], help="regress a process on truncated signatures")
    s.set_defaults(paths=10_000, maturity=1.0)
    s.add_argument("--target", choices=("ou", "cir", "inverse_cir", "fbm", "in_span"), default="inverse_cir")
    s.add_argument("--hurst", type=float, default=0.1)
    s.add_argument("--beta1", type=float, default=1e-6)
    s.add_argument("--beta2", type=float, default=1e-8)
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("hedge", parents=[_common()], help="simulate a quadratic hedge")
    s.set_defaults(paths=10_000)
    s.add_argument("--strike", type=float, nargs="*")
    s.add_argument("--product", choices=("european_call", "european_put", "asian_call", "asian_put"), default="european_put")
    s.add_argument("--strategy", choices=("sigvol", "bs_delta", "explicit_oracle"), default="sigvol")
    s.add_argument("--rebalance", type=int, default=None, help="rebalancing steps (default daily)")
    s.add_argument("--bs-sigma", type=float, default=None)
    s.add_argument("--pnl-csv", default=None)
    s.set_defaults(func=cmd_hedge)

    s = sub.add_parser("calibrate", parents=[_common()], help="calibrate per-maturity specs to a CSV surface")
    s.set_defaults(ode_steps=25)
    s.add_argument("--data", required=True, help="CSV with maturity_days,strike,implied_vol,spot")
    s.add_argument("--sigma0", type=float, default=0.1204)
    s.add_argument("--generations", type=int, default=200)
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads:
        os.environ["SIGVOL_THREADS"] = str(args.threads)
    from .riccati import RiccatiBlowUp

    try:
        args.func(args)
    except UsageError as exc:
        print(f"sigvol: error: {exc}", file=sys.stderr)
        return 2
    except (RiccatiBlowUp, FloatingPointError) as exc:
        print(f"sigvol: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"sigvol: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
