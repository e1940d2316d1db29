"""Benchmark harness: build a system from a config, run a solver, export records.

Configs are flat key=value text files; every flag can also be given on the
command line, with flags overriding the file.  Records go to CSV or JSON
with 17 significant digits so that reruns can be compared byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .accel import AccelConfig, ak_run, rk_run
from .errors import BreakdownError, ConfigurationError
from .kaczmarz import iterate, spectral_diagnostics
from .linalg import GALLERY_KINDS, NoiseSpec, add_noise, build_gallery, precondition_rows
from .transforms import DEFAULT_BREAKDOWN_THRESHOLD, MMPE, TRANSFORM_NAMES, window_length

PLAIN_COLUMNS = ("n", "err_norm", "res_norm")
ACCEL_COLUMNS = ("n", "err_z", "err_kacz_ref", "err_ratio", "dz_norm", "stop_ratio", "breakdown_flag")


@dataclass(frozen=True)
class ExperimentConfig:
    matrix: str = "parter"
    size: int = 100
    precondition: bool = True
    mode: str = "plain"  # plain | ak | rk
    transform: str | None = None
    k: int = 1
    aux_policy: str = "random"
    seed: int = 0
    noise_delta: float | None = None
    noise_seed: int = 0
    max_iter: int = 50
    breakdown_threshold: float | None = None
    fallback: str = "default"
    out: str | None = None
    format: str = "csv"

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, value)
        return cls(**values)


_BOOL_KEYS = {"precondition"}
_INT_KEYS = {"size", "k", "seed", "noise_seed", "max_iter"}
_FLOAT_KEYS = {"noise_delta", "breakdown_threshold"}


def _coerce(key, value):
    if key in _BOOL_KEYS:
        if value not in ("true", "false"):
            raise ConfigurationError(f"{key} must be true or false, got {value!r}")
        return value == "true"
    if key in _INT_KEYS:
        try:
            return int(value)
        except ValueError:
            raise ConfigurationError(f"{key} must be an integer, got {value!r}") from None
    if key in _FLOAT_KEYS:
        try:
            return float(value)
        except ValueError:
            raise ConfigurationError(f"{key} must be a number, got {value!r}") from None
    return value


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    columns: tuple
    rows: list  # list of dicts keyed by column name
    summary: dict
    spectral: dict | None = None

    def to_csv(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_format_cell(row.get(c)) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_json(self):
        payload = {
            "config": {f.name: getattr(self.config, f.name) for f in fields(self.config)},
            "records": [
                {c: row.get(c) for c in self.columns if _present(row.get(c))} for row in self.rows
            ],
            "summary": self.summary,
        }
        if self.spectral is not None:
            payload["spectral"] = self.spectral
        return json.dumps(payload, indent=2, default=_json_default) + "\n"


def _present(value):
    return value is not None and not (isinstance(value, float) and np.isnan(value))


def _format_cell(value):
    if not _present(value):
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value)!r}")


def _validate(config):
    if config.matrix not in GALLERY_KINDS:
        raise ConfigurationError(f"unknown matrix {config.matrix!r}; expected one of {GALLERY_KINDS}")
    if config.mode not in ("plain", "ak", "rk"):
        raise ConfigurationError(f"unknown mode {config.mode!r}")
    if config.format not in ("csv", "json"):
        raise ConfigurationError(f"unknown output format {config.format!r}")
    if config.mode != "plain":
        if config.transform is None:
            raise ConfigurationError(f"mode {config.mode!r} needs a transform")
        if config.transform not in TRANSFORM_NAMES:
            raise ConfigurationError(f"unknown transform {config.transform!r}")
        ell = window_length(config.transform, config.k)
        if config.transform == MMPE and config.k > config.size:
            raise ConfigurationError(
                f"MMPE needs k <= N independent auxiliary vectors (k={config.k}, N={config.size})"
            )
        if config.k >= config.size:
            raise ConfigurationError(
                f"transform order k={config.k} is too large for size {config.size}"
            )
        if config.mode == "ak" and config.max_iter < ell:
            raise ConfigurationError(
                f"AK with {config.transform} (k={config.k}) needs at least {ell} sweeps "
                f"to fill a window of {ell + 1} iterates; max_iter={config.max_iter}"
            )


def _build_system(config):
    system = build_gallery(config.matrix, config.size)
    if config.precondition:
        system = precondition_rows(system)
    if config.noise_delta is not None and config.noise_delta > 0:
        system = add_noise(system, NoiseSpec(config.noise_delta, config.noise_seed))
    return system


def _accel_config(config):
    kwargs = dict(
        transform=config.transform,
        k=config.k,
        mode=config.mode,
        max_outer=config.max_iter,
        aux_policy=config.aux_policy,
        seed=config.seed,
        fallback=config.fallback,
    )
    if config.breakdown_threshold is not None:
        kwargs["breakdown_threshold"] = config.breakdown_threshold
    return AccelConfig(**kwargs)


def _accel_rows(run):
    rows = []
    for n in range(len(run.zs)):
        rows.append(
            {
                "n": n,
                "err_z": run.err_z[n] if run.err_z is not None else None,
                "err_kacz_ref": run.err_kacz_ref[n] if n < len(run.err_kacz_ref) else None,
                "err_ratio": run.err_ratio[n] if n < len(run.err_ratio) else None,
                "dz_norm": run.dz_norms[n] if n < len(run.dz_norms) else None,
                "stop_ratio": run.stop_ratios[n] if n < len(run.stop_ratios) else None,
                "breakdown_flag": int(run.fallback_flags[n]),
            }
        )
    return rows


def run_experiment(config, spectral_max_order=256):
    """Execute the configured pipeline and (optionally) write its records."""
    _validate(config)
    system = _build_system(config)
    x0 = np.zeros(config.size)
    started = time.perf_counter()
    if config.mode == "plain":
        trace = iterate(system, x0, config.max_iter, tol=0.0)
        res_norms = trace.residual_norms
        rows = [
            {"n": n, "err_norm": trace.error_norms[n], "res_norm": res_norms[n]}
            for n in range(len(trace.iterates))
        ]
        columns = PLAIN_COLUMNS
        errors = trace.error_norms
        breakdowns = 0
    else:
        accel_cfg = _accel_config(config)
        if config.mode == "ak":
            run = ak_run(system, x0, accel_cfg)
        else:
            reference = iterate(
                system, x0, (config.max_iter + 1) * (accel_cfg.ell + 1), tol=0.0
            )
            run = rk_run(system, x0, accel_cfg, reference=reference)
        rows = _accel_rows(run)
        columns = ACCEL_COLUMNS
        errors = run.err_z
        breakdowns = len(run.breakdown_events)
    elapsed = time.perf_counter() - started
    to_target = next((n for n, e in enumerate(errors or []) if e <= 1e-11), None)
    summary = {
        "final_error": errors[-1] if errors else None,
        "iterations_to_1e-11": to_target,
        "breakdown_count": breakdowns,
        "wall_time_s": elapsed,
    }
    spectral = None
    if config.size <= spectral_max_order:
        diag = spectral_diagnostics(system)
        moduli = np.abs(diag.eigenvalues)
        spectral = {
            "spectral_radius": diag.spectral_radius,
            "second_modulus": float(moduli[1]) if len(moduli) > 1 else None,
            "meany_constant": diag.meany_constant,
            "condition_number": diag.condition_number,
        }
    result = ExperimentResult(
        config=config, columns=columns, rows=rows, summary=summary, spectral=spectral
    )
    if config.out:
        with open(config.out, "w") as handle:
            handle.write(result.to_csv() if config.format == "csv" else result.to_json())
    return result


def compare_suite(configs, spectral_max_order=256):
    """Run several transforms on one matrix/mode; return one wide CSV.

    Rows align on the outer-iteration index; entries a run never produced
    (shorter run, post-breakdown) are left empty.
    """
    if not configs:
        return "n\n"
    first = configs[0]
    for config in configs[1:]:
        if (config.matrix, config.size, config.mode) != (first.matrix, first.size, first.mode):
            raise ConfigurationError("suite configs must share matrix, size and mode")
    labels = []
    for idx, config in enumerate(configs):
        label = config.transform or config.mode
        if label in labels:
            label = f"{label}_{idx}"
        labels.append(label)
    results = [run_experiment(c, spectral_max_order=spectral_max_order) for c in configs]
    err_key = "err_norm" if first.mode == "plain" else "err_z"
    ratio_key = None if first.mode == "plain" else "err_ratio"
    header = ["n"]
    for label in labels:
        header.append(f"err_{label}")
        if ratio_key:
            header.append(f"ratio_{label}")
    lines = [",".join(header)]
    depth = max(len(r.rows) for r in results)
    for n in range(depth):
        cells = [str(n)]
        for result in results:
            row = result.rows[n] if n < len(result.rows) else {}
            cells.append(_format_cell(row.get(err_key)))
            if ratio_key:
                cells.append(_format_cell(row.get(ratio_key)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _parser():
    parser = argparse.ArgumentParser(
        prog="kaczmarz-bench",
        description="Run Kaczmarz / accelerated-Kaczmarz experiments on gallery matrices.",
    )
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--matrix", choices=GALLERY_KINDS)
    parser.add_argument("--size", type=int)
    parser.add_argument("--mode", choices=("plain", "ak", "rk"))
    parser.add_argument("--transform", choices=TRANSFORM_NAMES)
    parser.add_argument("--k", type=int)
    parser.add_argument("--max-iter", type=int, dest="max_iter")
    parser.add_argument("--noise", type=float, dest="noise_delta")
    parser.add_argument("--noise-seed", type=int, dest="noise_seed")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--aux-policy", choices=("random", "ones", "canonical", "residual"),
                        dest="aux_policy")
    parser.add_argument("--no-precondition", action="store_true")
    parser.add_argument("--breakdown-threshold", type=float, dest="breakdown_threshold")
    parser.add_argument("--fallback", choices=("default", "none"))
    parser.add_argument("--compare", help="comma-separated transforms to run as a suite")
    parser.add_argument("--out")
    parser.add_argument("--format", choices=("csv", "json"))
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.config:
            with open(args.config) as handle:
                config = ExperimentConfig.from_text(handle.read())
        else:
            config = ExperimentConfig()
        overrides = {}
        for name in ("matrix", "size", "mode", "transform", "k", "max_iter", "noise_delta",
                     "noise_seed", "seed", "aux_policy", "breakdown_threshold", "fallback",
                     "out", "format"):
            value = getattr(args, name)
            if value is not None:
                overrides[name] = value
        if args.no_precondition:
            overrides["precondition"] = False
        config = replace(config, **overrides)
        if args.compare:
            names = [t.strip() for t in args.compare.split(",") if t.strip()]
            suite = [replace(config, transform=name, out=None) for name in names]
            csv_text = compare_suite(suite)
            if config.out:
                with open(config.out, "w") as handle:
                    handle.write(csv_text)
            else:
                sys.stdout.write(csv_text)
            return 0
        result = run_experiment(config)
        summary = result.summary
        final = summary["final_error"]
        final_text = "n/a" if final is None else f"{final:.3e}"
        print(
            f"{config.matrix} N={config.size} mode={config.mode}"
            + (f" transform={config.transform} k={config.k}" if config.mode != "plain" else "")
            + f": final error {final_text}, breakdowns {summary['breakdown_count']},"
            + f" {summary['wall_time_s']:.2f}s"
        )
        if not config.out:
            sys.stdout.write(result.to_csv() if config.format == "csv" else result.to_json())
        return 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except BreakdownError as exc:
        print(f"numerical breakdown without fallback: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
