"""Drivers combining Kaczmarz sweeps with a sequence transformation.

Two modes:

* AK: the sweep sequence is left untouched; once enough iterates exist,
  every new sweep yields one new transformed vector.
* RK: after each group of sweeps the transform output becomes the new
  starting point and the sweeps restart from it.

Transformation breakdowns are recorded and bridged by a fallback (previous
output for AK, last sweep iterate for RK) unless configured to propagate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BreakdownError, ConfigurationError
from .kaczmarz import _sweep_inplace
from .transforms import (
    DEFAULT_BREAKDOWN_THRESHOLD,
    DEFAULT_CONDITION_LIMIT,
    EpsilonTable,
    TABLE_KINDS,
    TOPOLOGICAL,
    TRANSFORM_NAMES,
    TransformKind,
    default_auxiliary,
    make_window,
    transform_apply,
    window_length,
)

AUX_POLICIES = ("random", "ones", "canonical", "residual")


@dataclass(frozen=True)
class AccelConfig:
    """Configuration of one accelerated run."""

    transform: str
    k: int
    mode: str  # "ak" or "rk"
    max_outer: int = 50
    stop_window: int = 5
    stop_growth: float = 10.0
    stop_smallness_rel: float = 1e-13
    aux_policy: str = "random"
    seed: int = 0
    breakdown_threshold: float = DEFAULT_BREAKDOWN_THRESHOLD
    condition_limit: float = DEFAULT_CONDITION_LIMIT
    fallback: str = "default"  # or "none": let breakdowns propagate

    def __post_init__(self):
        if self.transform not in TRANSFORM_NAMES:
            raise ConfigurationError(f"unknown transform {self.transform!r}")
        if self.k < 1:
            raise ConfigurationError(f"transform order must be >= 1, got {self.k}")
        if self.mode not in ("ak", "rk"):
            raise ConfigurationError(f"mode must be 'ak' or 'rk', got {self.mode!r}")
        if self.max_outer < 0:
            raise ConfigurationError("max_outer must be >= 0")
        if self.aux_policy not in AUX_POLICIES:
            raise ConfigurationError(f"unknown auxiliary policy {self.aux_policy!r}")
        if self.aux_policy == "residual" and self.transform != TOPOLOGICAL:
            raise ConfigurationError("the residual auxiliary policy is topological-only")
        if self.fallback not in ("default", "none"):
            raise ConfigurationError(f"fallback must be 'default' or 'none', got {self.fallback!r}")

    @property
    def ell(self):
        return window_length(self.transform, self.k)


@dataclass
class AccelRun:
    """Records of an accelerated run, aligned on the transformed index n."""

    config: AccelConfig
    zs: list = field(default_factory=list)
    iterates: list = field(default_factory=list)  # AK: x_0, x_1, ...
    segments: list = field(default_factory=list)  # RK: one list per restart
    err_z: list | None = None
    err_kacz_ref: list = field(default_factory=list)
    err_ratio: list = field(default_factory=list)
    dz_norms: list = field(default_factory=list)
    stop_ratios: list = field(default_factory=list)
    breakdown_events: list = field(default_factory=list)
    fallback_flags: list = field(default_factory=list)
    stop_reason: str = "max-outer"
    smallness: float = 0.0
    sweeps_run: int = 0

    @property
    def mode(self):
        return self.config.mode

    def to_csv(self):
        lines = ["n,err_z,err_kacz_ref,err_ratio,dz_norm,stop_ratio,breakdown_flag"]

        def cell(seq, n):
            if seq is None or n >= len(seq):
                return ""
            value = seq[n]
            return "" if value is None or (isinstance(value, float) and np.isnan(value)) else f"{value:.17g}"

        for n in range(len(self.zs)):
            lines.append(
                ",".join(
                    [
                        str(n),
                        cell(self.err_z, n),
                        cell(self.err_kacz_ref, n),
                        cell(self.err_ratio, n),
                        cell(self.dz_norms, n),
                        cell(self.stop_ratios, n),
                        str(int(self.fallback_flags[n])) if n < len(self.fallback_flags) else "0",
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def _materialize_kind(config, system, reference_point):
    if config.aux_policy == "residual":
        return TransformKind(TOPOLOGICAL, y=system.residual(reference_point))
    return default_auxiliary(
        config.transform, config.k, system.order, config.aux_policy, config.seed
    )


def _sweep_copy(system, x):
    out, _, _ = _sweep_inplace(system, np.array(x, dtype=float, copy=True))
    return out


def _growth_signal_at(series, t, window, growth):
    if t < window:
        return False
    reference = min(series[t - window : t])
    return series[t] > growth * reference


def _stagnation_signal_at(series, t, window, smallness):
    if t < window:
        return False
    return series[t] <= smallness and series[t] >= min(series[t - window : t])


def stopping_signal(run, window=None, growth=None):
    """Scan a run's stopping series; return (signaled, first index or None).

    AK signals on growth of the ratio ||dz_n|| / ||dx_{n+ell}|| against its
    minimum over the trailing window; RK uses ||dz_n|| alone (small and no
    longer decreasing), since its ratio involves iterates that are never
    computed in practice.
    """
    window = run.config.stop_window if window is None else window
    growth = run.config.stop_growth if growth is None else growth
    if run.mode == "ak":
        series = run.stop_ratios
        for t in range(len(series)):
            if _growth_signal_at(series, t, window, growth):
                return True, t
        return False, None
    series = run.dz_norms
    for t in range(len(series)):
        if _stagnation_signal_at(series, t, window, run.smallness):
            return True, t
    return False, None


def ak_run(system, x0, config):
    """Accelerate alongside: sweep, and transform the trailing window.

    The base Kaczmarz sequence is exactly the one a plain run would
    produce; after the first ell iterates every sweep appends one
    transformed vector z.
    """
    if config.mode != "ak":
        raise ConfigurationError(f"ak_run needs an 'ak' config, got {config.mode!r}")
    ell = config.ell
    kind = _materialize_kind(config, system, x0)
    track_error = system.solution is not None
    run = AccelRun(config=config, err_z=[] if track_error else None)
    run.smallness = config.stop_smallness_rel * float(np.linalg.norm(system.rhs))
    xs = run.iterates
    xs.append(np.array(x0, dtype=float, copy=True))

    use_table = config.transform in TABLE_KINDS
    table = None

    def fresh_table():
        return EpsilonTable(
            kind, max_column=2 * config.k, breakdown_threshold=config.breakdown_threshold
        )

    if use_table:
        table = fresh_table()
        table.extend(xs[0])

    for n in range(config.max_outer):
        x_next = _sweep_copy(system, xs[-1])
        xs.append(x_next)
        run.sweeps_run += 1
        z = None
        fell_back = False
        if use_table:
            try:
                evens = table.extend(x_next)
                z = evens.get(config.k)
            except BreakdownError as exc:
                if config.fallback == "none":
                    raise
                run.breakdown_events.append((len(run.zs), str(exc)))
                # restart the table from the current iterate; outputs resume
                # once the diagonal reaches column 2k again
                table = fresh_table()
                table.extend(x_next)
        elif len(xs) >= ell + 1:
            window = make_window(xs[-(ell + 1) :], config.k, base_index=len(xs) - 1 - ell)
            try:
                z = transform_apply(kind, window, condition_limit=config.condition_limit)
            except BreakdownError as exc:
                if config.fallback == "none":
                    raise
                run.breakdown_events.append((len(run.zs), str(exc)))
                z = None
        if len(xs) < ell + 1:
            continue  # still warming up
        if z is None:
            z = run.zs[-1] if run.zs else xs[-1]
            fell_back = True
        run.zs.append(np.asarray(z, dtype=float))
        run.fallback_flags.append(fell_back)
        if track_error:
            run.err_z.append(float(np.linalg.norm(z - system.solution)))
            ref = float(np.linalg.norm(xs[-1] - system.solution))
            run.err_kacz_ref.append(ref)
            run.err_ratio.append(run.err_z[-1] / ref if ref > 0 else np.nan)
        m = len(run.zs) - 1
        if m >= 1:
            run.dz_norms.append(float(np.linalg.norm(run.zs[m] - run.zs[m - 1])))
            dx = float(np.linalg.norm(xs[-1] - xs[-2]))
            run.stop_ratios.append(run.dz_norms[-1] / dx if dx > 0 else np.inf)
            t = len(run.stop_ratios) - 1
            if _growth_signal_at(run.stop_ratios, t, config.stop_window, config.stop_growth):
                run.stop_reason = "stopping-signal"
                break
    return run


def rk_run(system, x0, config, reference=None):
    """Restarted acceleration: ell sweeps, one transform, restart from it.

    ``reference`` may be a plain SweepTrace from the same x0; it supplies
    the non-restarted iterates against which the error and stopping ratios
    of the restarted run are reported.
    """
    if config.mode != "rk":
        raise ConfigurationError(f"rk_run needs an 'rk' config, got {config.mode!r}")
    ell = config.ell
    track_error = system.solution is not None
    run = AccelRun(config=config, err_z=[] if track_error else None)
    run.smallness = config.stop_smallness_rel * float(np.linalg.norm(system.rhs))
    restart = np.array(x0, dtype=float, copy=True)
    use_table = config.transform in TABLE_KINDS

    ref_iterates = reference.iterates if reference is not None else None
    ref_errors = reference.error_norms if reference is not None else None

    for n in range(config.max_outer):
        kind = _materialize_kind(config, system, restart)
        segment = [restart]
        for _ in range(ell):
            segment.append(_sweep_copy(system, segment[-1]))
        run.sweeps_run += ell
        move = max(float(np.linalg.norm(b - a)) for a, b in zip(segment, segment[1:]))
        if move <= 1e-15 * (1.0 + float(np.linalg.norm(restart))):
            run.stop_reason = "converged"
            break
        run.segments.append(segment)
        fell_back = False
        try:
            if use_table:
                table = EpsilonTable(
                    kind, max_column=2 * config.k,
                    breakdown_threshold=config.breakdown_threshold,
                )
                evens = {}
                for point in segment:
                    evens = table.extend(point)
                z = evens[config.k]
            else:
                window = make_window(segment, config.k, base_index=0)
                z = transform_apply(kind, window, condition_limit=config.condition_limit)
        except BreakdownError as exc:
            if config.fallback == "none":
                raise
            run.breakdown_events.append((n, str(exc)))
            z = segment[-1]
            fell_back = True
        z = np.asarray(z, dtype=float)
        run.zs.append(z)
        run.fallback_flags.append(fell_back)
        ref_index = (n + 1) * (ell + 1)
        if track_error:
            run.err_z.append(float(np.linalg.norm(z - system.solution)))
            if ref_errors is not None and ref_index < len(ref_errors):
                ref = ref_errors[ref_index]
                run.err_kacz_ref.append(ref)
                run.err_ratio.append(run.err_z[-1] / ref if ref > 0 else np.nan)
            else:
                run.err_kacz_ref.append(np.nan)
                run.err_ratio.append(np.nan)
        m = len(run.zs) - 1
        if m >= 1:
            run.dz_norms.append(float(np.linalg.norm(run.zs[m] - run.zs[m - 1])))
            if ref_iterates is not None and ref_index < len(ref_iterates):
                dx = float(
                    np.linalg.norm(ref_iterates[ref_index] - ref_iterates[ref_index - 1])
                )
                run.stop_ratios.append(run.dz_norms[-1] / dx if dx > 0 else np.inf)
            else:
                run.stop_ratios.append(np.nan)
            t = len(run.dz_norms) - 1
            if _stagnation_signal_at(run.dz_norms, t, config.stop_window, run.smallness):
                run.stop_reason = "stopping-signal"
                break
        restart = z
    return run
