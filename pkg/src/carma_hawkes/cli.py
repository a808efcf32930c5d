"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 invalid parameters or input, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .black_scholes import ImpliedVolError, implied_vol
from .calibration import (CalibConfig, PricingSettings, PsiLayout, QuoteFileError, calibrate,
                          psi_to_model, read_quotes)
from .charfn import ModelValidationError, NumericalError, RiskNeutralModel
from .fourier import FourierPricer
from .jump_models import NormalJump, ShiftedGammaJump
from .model_core import CarmaHawkesParams, NonDiagonalizableError
from .presets import BASE, FAMILIES
from .simulation import mc_price_strikes, simulate_arrivals, simulate_terminal_paths, chunk_generator
from .toy_model import counting_pmf

log = logging.getLogger("carma_hawkes")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3, 4

MODEL_KEYS = {"family", "mu", "a", "b_raw", "jump_law", "mu_J", "sigma_J", "alpha", "beta", "shift",
              "sigma", "r", "S0", "X0", "t0"}
NUMERICS_DEFAULTS = {"m": 450, "n_steps": 2000, "mc_paths": 100_000, "seed": 12345,
                     "pmf_n_max": 64, "series_eps": 1e-8, "workers": 1, "cv_beta": None}
CALIB_KEYS = {"family", "initial", "bounds", "max_evals", "restarts", "tol", "seed"}


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    model: dict
    numerics: dict
    calibration: dict

    def to_json(self) -> str:
        return json.dumps({"model": self.model, "numerics": self.numerics,
                           "calibration": self.calibration}, indent=2, sort_keys=True)

    def build_model(self, **overrides) -> RiskNeutralModel:
        m = dict(self.model)
        m.update(overrides)
        hawkes = CarmaHawkesParams(m["mu"], tuple(m["a"]), tuple(m["b_raw"]))
        if m["jump_law"] == "normal":
            jump = NormalJump(m["mu_J"], m["sigma_J"], "Q")
        else:
            jump = ShiftedGammaJump(m["alpha"], m["beta"], m.get("shift"), "Q")
        return RiskNeutralModel(hawkes, jump, m["sigma"], m["r"], m["S0"], m.get("X0"), m["t0"])


def _preset_model(family: str) -> dict:
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; choose from {sorted(FAMILIES)} or give mu/a/b_raw")
    a, b = FAMILIES[family]
    return {"family": family, "mu": BASE["mu"], "a": list(a), "b_raw": list(b), "jump_law": "normal",
            "mu_J": BASE["mu_J"], "sigma_J": BASE["sigma_J"], "sigma": BASE["sigma"], "r": BASE["r"],
            "S0": BASE["S0"], "X0": None, "t0": 0.0}


def parse_config(doc: dict, preset: str = "hawkes") -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - {"model", "numerics", "calibration"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    model_in = doc.get("model", {})
    bad = set(model_in) - MODEL_KEYS
    if bad:
        raise ConfigError(f"unknown model keys {sorted(bad)}")
    family = model_in.get("family", preset)
    model = _preset_model(family if family in FAMILIES else preset)
    if family not in FAMILIES:
        if not {"mu", "a", "b_raw"} <= set(model_in):
            raise ConfigError(f"custom family {family!r} needs mu, a and b_raw")
        model["family"] = family
    model.update(model_in)
    if model["jump_law"] not in ("normal", "shifted_gamma"):
        raise ConfigError("jump_law must be 'normal' or 'shifted_gamma'")
    if model["jump_law"] == "shifted_gamma" and not {"alpha", "beta"} <= set(model):
        raise ConfigError("shifted_gamma jumps need alpha and beta")
    num_in = doc.get("numerics", {})
    bad = set(num_in) - set(NUMERICS_DEFAULTS)
    if bad:
        raise ConfigError(f"unknown numerics keys {sorted(bad)}")
    numerics = dict(NUMERICS_DEFAULTS)
    numerics.update(num_in)
    calib = doc.get("calibration", {})
    bad = set(calib) - CALIB_KEYS
    if bad:
        raise ConfigError(f"unknown calibration keys {sorted(bad)}")
    cfg = RunConfig(model, numerics, dict(calib))
    cfg.build_model()  # validate eagerly
    return cfg


def load_config(path: str | None, preset: str) -> RunConfig:
    if path is None:
        return parse_config({"model": {"family": preset}}, preset)
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, preset)


def _writer(out):
    if out is None or out == "-":
        return sys.stdout, False
    return open(out, "w", newline=""), True


def _emit_rows(out, header, rows):
    fh, close = _writer(out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if close:
            fh.close()


def _otm_iv(call, put, S0, K, r, tau):
    """IV from the out-of-the-money side, which is better conditioned."""
    fwd = S0 * np.exp(r * tau)
    try:
        if K >= fwd:
            return implied_vol(call, S0, K, r, tau, True)
        return implied_vol(put, S0, K, r, tau, False)
    except ImpliedVolError:
        return float("nan")


def _grid(start, stop, step):
    if step <= 0:
        raise ConfigError("step must be positive")
    if stop < start:
        raise ConfigError("empty range")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def cmd_price(args, cfg: RunConfig):
    model = cfg.build_model()
    num = cfg.numerics
    pricer = FourierPricer(model, num["m"], num["n_steps"])
    call = pricer.call(args.strike, args.maturity)
    put = pricer.put(args.strike, args.maturity)
    print(f"call {call:.4f}")
    print(f"put  {put:.4f}")
    if args.mc:
        M = args.paths or num["mc_paths"]
        seed = args.seed if args.seed is not None else num["seed"]
        res = mc_price_strikes([args.strike], args.maturity, model, M, seed, cv_beta=num["cv_beta"],
                               workers=num["workers"])[0]
        print(res)


def cmd_surface(args, cfg: RunConfig):
    if not args.maturities:
        raise ConfigError("empty maturity list")
    model = cfg.build_model()
    num = cfg.numerics
    strikes = _grid(args.from_, args.to, args.step)
    pricer = FourierPricer(model, num["m"], num["n_steps"])
    rows = []
    for T in args.maturities:
        tau = model.tau(T)
        calls, puts = pricer.calls(strikes, T), pricer.puts(strikes, T)
        for K, c, p in zip(strikes, calls, puts):
            rows.append((K, T, c, p, _otm_iv(c, p, model.S0, K, model.r, tau)))
    _emit_rows(args.out, ["strike", "maturity", "call", "put", "iv"], rows)


SWEEPABLE = {"mu", "mu_J", "sigma_J", "sigma", "r"}


def _override(cfg: RunConfig, name: str, value: float) -> dict:
    if name in SWEEPABLE:
        return {name: value}
    for key, prefix in (("b_raw", "b"), ("a", "a")):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            idx = int(name[len(prefix):]) - (1 if key == "a" else 0)
            vec = list(cfg.model[key])
            if not 0 <= idx < len(vec):
                raise ConfigError(f"parameter {name} out of range")
            vec[idx] = value
            return {key: vec}
    raise ConfigError(f"cannot sweep {name!r}")


def cmd_sensitivity(args, cfg: RunConfig):
    values = _grid(args.from_, args.to, args.step)
    num = cfg.numerics
    rows = []
    for v in values:
        model = cfg.build_model(**_override(cfg, args.param, float(v)))
        K = args.strike if args.strike is not None else model.S0
        pricer = FourierPricer(model, num["m"], num["n_steps"])
        c, p = pricer.call(K, args.maturity), pricer.put(K, args.maturity)
        rows.append((v, K, args.maturity, c, _otm_iv(c, p, model.S0, K, model.r, model.tau(args.maturity))))
    _emit_rows(args.out, [args.param, "strike", "maturity", "call", "iv"], rows)


def cmd_simulate(args, cfg: RunConfig):
    model = cfg.build_model()
    num = cfg.numerics
    M = args.paths or num["mc_paths"]
    seed = args.seed if args.seed is not None else num["seed"]
    sample = simulate_terminal_paths(model, args.maturity, M, seed, workers=num["workers"])
    if args.out:
        _emit_rows(args.out, ["path_index", "S_T", "N_T", "compensator"],
                   zip(range(M), sample.S_T, sample.N_T.tolist(), sample.compensator))
    if args.events_out:
        rec = simulate_arrivals(model.hawkes, args.maturity, chunk_generator(seed, 1 << 20),
                                model.t0, model.X0)
        _emit_rows(args.events_out, ["event_index", "time"], zip(range(1, rec.N_T + 1), rec.times))
    disc = np.exp(-model.r * model.tau(args.maturity)) * sample.S_T
    print(f"paths {M}  seed {seed}")
    print(f"discounted mean S_T {disc.mean():.4f} (se {disc.std(ddof=1) / np.sqrt(M):.4f}, S0 {model.S0:.4f})")
    print(f"mean N_T {sample.N_T.mean():.4f}  mean compensator {sample.compensator.mean():.4f}")


def cmd_pmf(args, cfg: RunConfig):
    model = cfg.build_model()
    n_max = args.n_max if args.n_max is not None else cfg.numerics["pmf_n_max"]
    pmf = counting_pmf(model.hawkes, model.t0, args.maturity, model.X0, n_max,
                       n_steps=cfg.numerics["n_steps"])
    _emit_rows(args.out, ["n", "probability"], zip(range(n_max + 1), pmf.probs))
    if pmf.mass_deficit > cfg.numerics["series_eps"]:
        print(f"warning: mass deficit {pmf.mass_deficit:.3e}; raise --n-max", file=sys.stderr)


def cmd_calibrate(args, cfg: RunConfig):
    quotes = read_quotes(args.quotes)
    if not quotes:
        raise ConfigError("no quotes left after the liquidity filter")
    m = cfg.model
    layout = PsiLayout(len(m["a"]), len(m["b_raw"]) - 1)
    cal = cfg.calibration
    initial = cal.get("initial") or list(layout.pack(m["mu"], m["b_raw"], m["a"], m["mu_J"], m["sigma_J"], m["sigma"]))
    bounds = [tuple(b) for b in cal["bounds"]] if "bounds" in cal else None
    config = CalibConfig(layout, np.asarray(initial, dtype=float), bounds,
                         cal.get("max_evals", 2000), cal.get("restarts", 3), cal.get("tol", 1e-10),
                         cal.get("seed", 0))
    settings = PricingSettings(m["S0"], m["r"], cfg.numerics["m"], cfg.numerics["n_steps"],
                               m.get("X0"), m["t0"])
    res = calibrate(quotes, config, settings)
    report = json.dumps(res.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(report + "\n")
    else:
        print(report)
    if args.smile_out:
        model = psi_to_model(res.psi, layout, settings)
        pricer = FourierPricer(model, settings.m, settings.n_steps)
        rows = []
        for q in quotes:
            c, p = pricer.call(q.strike, q.maturity), pricer.put(q.strike, q.maturity)
            rows.append((q.strike, q.maturity, c, p,
                         _otm_iv(c, p, model.S0, q.strike, model.r, model.tau(q.maturity))))
        _emit_rows(args.smile_out, ["strike", "maturity", "call", "put", "iv"], rows)


def cmd_config(args, cfg: RunConfig):
    print(cfg.to_json())


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--preset", default="hawkes", choices=sorted(FAMILIES),
                        help="reference parameter set used when no config is given")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="carma-hawkes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", parents=[common], help="Fourier call and put prices")
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--mc", action="store_true", help="add a Monte Carlo cross-check")
    p.add_argument("--paths", type=int)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("surface", parents=[common], help="price and IV grid as CSV")
    p.add_argument("--from", dest="from_", type=float, default=70.0)
    p.add_argument("--to", type=float, default=120.0)
    p.add_argument("--step", type=float, default=2.0)
    p.add_argument("--maturities", type=_floats, default=[0.25, 0.5, 1.0, 3.5])
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("sensitivity", parents=[common], help="IV sweep over one parameter")
    p.add_argument("--param", required=True)
    p.add_argument("--from", dest="from_", type=float, required=True)
    p.add_argument("--to", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--maturity", type=float, default=1.0)
    p.add_argument("--strike", type=float, help="defaults to the at-the-money strike S0")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("simulate", parents=[common], help="terminal prices by thinning")
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--paths", type=int)
    p.add_argument("--events-out", help="dump one path's event times as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pmf", parents=[common], help="law of the number of events")
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--n-max", type=int)
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("calibrate", parents=[common], help="fit psi to a quote file")
    p.add_argument("--quotes", required=True)
    p.add_argument("--smile-out", help="fitted smile CSV")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("config", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.preset)
        args.func(args, cfg)
    except (ConfigError, QuoteFileError, ModelValidationError, NonDiagonalizableError,
            ImpliedVolError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
