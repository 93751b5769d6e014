"""Command-line interface.

Subcommands: ``fit``, ``transform``, ``reconstruct``, ``spectra`` and
``check-grad``.  Every flag may also be given in a TOML file passed with
``--config`` (same names, dashes replaced by underscores); flags given on
the command line win.

Exit codes: 0 success, 1 error, 2 fit finished with a non-converged
component.
"""

import argparse
import importlib
import io
import logging
import sys

import numpy as np

from . import gradcheck
from .errors import PipelineError, SchemaError, SignalError
from .model import FittedModel, fit
from .objectives import NegentropyConfig, NegentropyObjective, Objective, PCAObjective
from .optimiser import OptimConfig
from .signal_io import HankelConfig, center, diagonal_average, hankelise, load_signal
from .svg import line_panels

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("spectral_lvm")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

DEFAULTS = {
    "input": None,
    "format": "csv",
    "sample_rate": None,
    "window": 32,
    "shift": 1,
    "components": 1,
    "objective": "negentropy",
    "gfunc": "logcosh",
    "ga": 1.0,
    "alpha0": 1.0,
    "alpha_scale": 10.0,
    "sumt_iters": 5,
    "no_regularisation": False,
    "optimiser": "newton",
    "lr": 1e-2,
    "tol": 1e-6,
    "max_iter": 500,
    "batch_size": None,
    "gram_schmidt": False,
    "whiten": False,
    "scale": False,
    "seed": 0,
    "out": None,
    "config": None,
    "svg": None,
    "collapse": "none",
    "model": None,
    "latent": None,
    "points": 10,
    "rows": 256,
    "priors": 3,
}

_OPTIMISERS = {"sd": "steepest_descent", "newton": "newton", "bfgs": "bfgs"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _add_signal_args(p):
    p.add_argument("--input", help="signal file")
    p.add_argument("--format", choices=["csv", "f32", "f64"])
    p.add_argument("--sample-rate", type=float, metavar="HZ")


def _add_objective_args(p):
    p.add_argument("--objective", help="pca, negentropy, or module:attribute of a custom objective")
    p.add_argument("--gfunc", choices=["logcosh", "exp", "quartic"])
    p.add_argument("--ga", type=float, help="logcosh parameter a in [1, 2]")


def build_parser():
    parser = _Parser(prog="spectral-lvm", description="Spectrally regularised linear LVMs for single-channel signals.")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model and write it as JSON", argument_default=argparse.SUPPRESS)
    _add_signal_args(p)
    _add_objective_args(p)
    p.add_argument("--window", type=int)
    p.add_argument("--shift", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha-scale", type=float)
    p.add_argument("--sumt-iters", type=int)
    p.add_argument("--no-regularisation", action="store_true")
    p.add_argument("--optimiser", choices=sorted(_OPTIMISERS))
    p.add_argument("--lr", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--gram-schmidt", action="store_true")
    p.add_argument("--whiten", action="store_true")
    p.add_argument("--scale", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="model file (default model.json)")
    p.add_argument("--config")

    p = sub.add_parser("transform", help="write latent sources as CSV", argument_default=argparse.SUPPRESS)
    _add_signal_args(p)
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--config")

    p = sub.add_parser("reconstruct", help="map latent sources back to the data space", argument_default=argparse.SUPPRESS)
    _add_signal_args(p)
    p.add_argument("--model")
    p.add_argument("--latent", help="latent CSV (as written by transform); otherwise --input is transformed")
    p.add_argument("--collapse", choices=["none", "diagonal"])
    p.add_argument("--out")
    p.add_argument("--config")

    p = sub.add_parser("spectra", help="power spectra of the latent sources", argument_default=argparse.SUPPRESS)
    _add_signal_args(p)
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--svg")
    p.add_argument("--config")

    p = sub.add_parser("check-grad", help="compare analytic and finite-difference derivatives", argument_default=argparse.SUPPRESS)
    _add_signal_args(p)
    _add_objective_args(p)
    p.add_argument("--window", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--rows", type=int, help="rows of synthetic data when --input is absent")
    p.add_argument("--priors", type=int, help="stored spectra for the penalty check")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    return parser


def merge_config(namespace):
    """Defaults < TOML config file < command-line flags."""
    cli = {k: v for k, v in vars(namespace).items() if k != "command"}
    merged = dict(DEFAULTS)
    path = cli.get("config")
    if path:
        try:
            with open(path, "rb") as fh:
                file_values = tomllib.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"invalid TOML in {path}: {exc}") from None
        unknown = sorted(set(file_values) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config key {unknown[0]!r} in {path}")
        merged.update(file_values)
    merged.update(cli)
    merged["command"] = namespace.command
    return merged


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _fmt(v):
    return repr(float(v))


def write_csv(path, header, rows):
    buf = io.StringIO(newline="")
    if header:
        buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")
    text = buf.getvalue()
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def read_matrix_csv(path):
    """Read a numeric CSV with an optional single header row."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise UsageError(f"{path} line {lineno}: non-numeric value") from None
    if not rows:
        raise UsageError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise UsageError(f"{path}: rows have differing column counts")
    return np.array(rows, dtype=np.float64)


def _signal(cfg, required=True):
    if cfg["input"] is None:
        if required:
            raise UsageError("--input is required")
        return None
    return load_signal(cfg["input"], cfg["format"], cfg["sample_rate"])


def _model(cfg):
    if cfg["model"] is None:
        raise UsageError("--model is required")
    return FittedModel.load(cfg["model"])


def make_objective(cfg):
    name = cfg["objective"]
    if name == "pca":
        return PCAObjective()
    if name == "negentropy":
        return NegentropyObjective(NegentropyConfig(cfg["gfunc"], float(cfg["ga"])))
    if ":" in name:
        module, _, attr = name.partition(":")
        try:
            target = getattr(importlib.import_module(module), attr)
        except (ImportError, AttributeError) as exc:
            raise UsageError(f"cannot import objective {name!r}: {exc}") from None
        obj = target() if isinstance(target, type) or (callable(target) and not isinstance(target, Objective)) else target
        if not isinstance(obj, Objective):
            raise UsageError(f"{name!r} did not produce an Objective")
        return obj
    raise UsageError(f"unknown objective {name!r}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_fit(cfg):
    window, components = cfg["window"], cfg["components"]
    if components < 1 or components > window:
        raise UsageError(f"--components must lie in [1, --window={window}], got {components}")
    try:
        hankel = HankelConfig(window, cfg["shift"])
        optim = OptimConfig(
            strategy=_OPTIMISERS.get(cfg["optimiser"], cfg["optimiser"]),
            learning_rate=cfg["lr"],
            tol=cfg["tol"],
            max_inner_iters=cfg["max_iter"],
            sumt_alpha0=cfg["alpha0"],
            sumt_scale=cfg["alpha_scale"],
            sumt_iters=cfg["sumt_iters"],
            seed=cfg["seed"],
            batch_size=cfg["batch_size"],
            gram_schmidt=bool(cfg["gram_schmidt"]),
            regularisation=not cfg["no_regularisation"],
        )
        objective = make_objective(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    signal = _signal(cfg)
    if window > len(signal):
        raise UsageError(f"--window {window} exceeds signal length {len(signal)}")

    model = fit(signal, hankel, objective, components, optim, scale=bool(cfg["scale"]), whiten_data=bool(cfg["whiten"]))
    out = cfg["out"] or "model.json"
    model.save(out)

    print(f"{'comp':>4} {'iters':>6} {'objective':>14} {'penalty':>12} {'grad_norm':>10}  converged")
    for c in model.diagnostics.components:
        print(
            f"{c.component + 1:>4} {c.iterations:>6} {c.objective:>14.6g} {c.penalty:>12.4g} "
            f"{c.gradient_norm:>10.3g}  {'yes' if c.converged else 'NO'}"
        )
    print(f"model written to {out}")
    return EXIT_OK if model.diagnostics.converged else EXIT_NOT_CONVERGED


def cmd_transform(cfg):
    model = _model(cfg)
    Z = model.transform(_signal(cfg))
    write_csv(cfg["out"], [f"z{i + 1}" for i in range(Z.shape[1])], Z)
    return EXIT_OK


def cmd_reconstruct(cfg):
    model = _model(cfg)
    if cfg["latent"] is not None:
        Z = read_matrix_csv(cfg["latent"])
    else:
        Z = model.transform(_signal(cfg))
    X_hat = model.inverse_transform(Z)
    if cfg["collapse"] == "diagonal":
        x = diagonal_average(X_hat, model.hankel.shift)
        write_csv(cfg["out"], None, x[:, None])
    else:
        write_csv(cfg["out"], [f"x{i + 1}" for i in range(X_hat.shape[1])], X_hat)
    return EXIT_OK


def cmd_spectra(cfg):
    model = _model(cfg)
    signal = _signal(cfg)
    power, freqs = model.source_spectra(signal)
    n_bins = power.shape[1] // 2 + 1
    rows = []
    for i, p in enumerate(power):
        for k in range(n_bins):
            f = _fmt(freqs[k]) if freqs is not None else ""
            rows.append((str(i + 1), str(k), f, _fmt(p[k])))
    write_csv(cfg["out"], ["component", "bin", "frequency_hz", "power"], rows)
    if cfg["svg"]:
        x = freqs if freqs is not None else np.arange(n_bins)
        label = "frequency [Hz]" if freqs is not None else "bin"
        titles = []
        for i, p in enumerate(power):
            k = int(np.argmax(p[:n_bins]))
            where = f"{x[k]:.3f} Hz" if freqs is not None else f"bin {k}"
            titles.append(f"z{i + 1}: peak at {where}")
        svg = line_panels(x, [p[:n_bins] for p in power], titles, x_label=label)
        with open(cfg["svg"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    return EXIT_OK


def cmd_check_grad(cfg):
    try:
        objective = make_objective(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rng = np.random.default_rng(cfg["seed"])
    n = cfg["window"]
    signal = _signal(cfg, required=False)
    if signal is not None:
        X = center(hankelise(signal, HankelConfig(n))).values
    else:
        X = gradcheck.synthetic_data(cfg["rows"], n, rng)
    points = gradcheck.random_unit_vectors(n, cfg["points"], rng)
    results = [
        gradcheck.check_objective(objective, X, points),
        gradcheck.check_penalty(gradcheck.random_state(n, cfg["priors"], rng), points),
    ]
    ok = True
    print(f"{'check':<36} {'max grad err':>13} {'max hess err':>13}  status")
    for r in results:
        passed = r.passed()
        ok &= passed
        print(f"{r.name:<36} {r.max_gradient_error:>13.3e} {r.max_hessian_error:>13.3e}  {'PASS' if passed else 'FAIL'}")
    print(f"tolerances: gradient {gradcheck.GRADIENT_TOL:g}, Hessian {gradcheck.HESSIAN_TOL:g}")
    return EXIT_OK if ok else EXIT_ERROR


COMMANDS = {
    "fit": cmd_fit,
    "transform": cmd_transform,
    "reconstruct": cmd_reconstruct,
    "spectra": cmd_spectra,
    "check-grad": cmd_check_grad,
}


def main(argv=None):
    parser = build_parser()
    namespace = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(namespace, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if hasattr(namespace, "verbose"):
        del namespace.verbose
    try:
        cfg = merge_config(namespace)
        return COMMANDS[cfg["command"]](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spectral-lvm {namespace.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except PipelineError as exc:
        print(f"spectral-lvm {namespace.command}: error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_ERROR
    except (SignalError, SchemaError, ValueError, OSError) as exc:
        print(f"spectral-lvm {namespace.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
