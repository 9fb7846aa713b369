"""Command-line front end.

Every subcommand computes one phase distribution (or, for ``compare``, two
of them plus a distance report) and writes it as CSV or JSON.  Exit status
is 0 on success, 1 for invalid input (a JSON error object goes to stderr)
and 2 when a numerical routine fails to converge.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .direct import (
    DataPolicy,
    NormalizationPolicy,
    averaged_distribution,
    direct_strong_limit,
    direct_weak_limit,
    discarded_fraction,
)
from .fock import MAX_TM_CUTOFF, TwoModeFockState, tm_phase_distribution
from .indirect import IndirectConfig, indirect_general, indirect_weak_limit
from .kernels import CoherentPair, TailBoundError
from .montecarlo import empirical_phase_distribution
from .numerics import (
    FringeSummary,
    PhaseDistribution,
    PhaseGrid,
    QuadratureError,
    distribution_distances,
    fringe_density,
    fringe_fit,
)

SCHEMES = ("direct", "direct-strong", "direct-weak", "indirect", "indirect-weak", "fock", "mc", "compare")
EXIT_INVALID = 1
EXIT_NONCONVERGED = 2

_POLAR = re.compile(r"^\s*([^@]+)@([^@]+)\s*$")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def parse_complex(text) -> complex:
    """Read ``mag@phase`` (phase in radians), ``re+imi``/``re+imj`` or a plain real."""
    if isinstance(text, (int, float)):
        return complex(text)
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    s = str(text).strip()
    m = _POLAR.match(s)
    try:
        if m:
            mag, phase = float(m.group(1)), float(m.group(2))
            if mag < 0:
                raise ConfigError(f"negative magnitude in {text!r}")
            return complex(mag * math.cos(phase), mag * math.sin(phase))
        return complex(s.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot read complex amplitude {text!r}") from None


@dataclass
class ExperimentConfig:
    scheme: str
    beta1: complex = 0j
    beta2: complex = 0j
    policy: DataPolicy = DataPolicy.DISCARD_ORIGIN
    normalization: NormalizationPolicy = NormalizationPolicy.AVERAGE_THEN_NORMALIZE
    grid_points: int = 256
    tolerance: float = 1e-9
    seed: int | None = None
    shots: int | None = None
    cutoff: int | None = None
    lo_phase: float = 0.0
    output_path: Path | None = None
    format: str = "json"
    explicit: set[str] = field(default_factory=set, repr=False)

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.scheme != "mc" and ({"shots", "seed"} & self.explicit):
            raise ConfigError("--shots and --seed apply only to the mc scheme")
        if self.scheme != "fock" and "cutoff" in self.explicit:
            raise ConfigError("--cutoff applies only to the fock scheme")
        if self.scheme == "mc":
            if self.shots is None or self.shots < 1:
                raise ConfigError("mc needs --shots >= 1")
            if self.seed is None or self.seed < 0:
                raise ConfigError("mc needs a nonnegative --seed")
        if self.scheme == "fock" and not (self.cutoff is not None and 0 <= self.cutoff <= MAX_TM_CUTOFF):
            raise ConfigError(f"fock needs 0 <= --cutoff <= {MAX_TM_CUTOFF}")
        if not (isinstance(self.grid_points, int) and self.grid_points >= 8 and self.grid_points % 2 == 0):
            raise ConfigError("grid_points must be an even integer >= 8")
        if not 0 < self.tolerance <= 1e-4:
            raise ConfigError("tolerance must lie in (0, 1e-4]")
        if self.scheme == "compare":
            if self.output_path is None:
                raise ConfigError("compare needs --output pointing to a directory")
        try:
            CoherentPair(self.beta1, self.beta2)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "explicit":
                continue
            v = getattr(self, f.name)
            if isinstance(v, complex):
                v = [v.real, v.imag]
            elif isinstance(v, (DataPolicy, NormalizationPolicy)):
                v = v.value
            elif isinstance(v, Path):
                v = str(v)
            out[f.name] = v
        return out


_CONVERTERS = {
    "beta1": parse_complex,
    "beta2": parse_complex,
    "policy": DataPolicy,
    "normalization": NormalizationPolicy,
    "grid_points": int,
    "tolerance": float,
    "seed": int,
    "shots": int,
    "cutoff": int,
    "lo_phase": float,
    "output_path": Path,
    "format": str,
}


def _convert(key, value):
    try:
        return _CONVERTERS[key](value)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid value {value!r} for {key}") from None


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "invalid-config", "message": message}), file=sys.stderr)
        sys.exit(EXIT_INVALID)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opphase", description="Operational relative-phase distributions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="scheme", required=True)
    for scheme in SCHEMES:
        p = sub.add_parser(scheme)
        p.add_argument("--config", type=Path, help="JSON file with default settings; flags override it")
        p.add_argument("--beta1", help="amplitude as mag@phase or re+imi")
        p.add_argument("--beta2", help="amplitude as mag@phase or re+imi")
        p.add_argument("--policy", choices=[x.value for x in DataPolicy])
        p.add_argument("--normalization", choices=[x.value for x in NormalizationPolicy])
        p.add_argument("--grid-points", dest="grid_points")
        p.add_argument("--tolerance")
        p.add_argument("--seed")
        p.add_argument("--shots", help="shots per theta setting (mc)")
        p.add_argument("--cutoff")
        p.add_argument("--lo-phase", dest="lo_phase")
        p.add_argument("--output", dest="output_path", help="file (directory for compare); stdout if omitted")
        p.add_argument("--format", choices=["csv", "json"])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key == "output":
                key = "output_path"
            if key not in _CONVERTERS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
    for key in _CONVERTERS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    config = ExperimentConfig(args.scheme, **{k: _convert(k, v) for k, v in values.items()})
    config.explicit = set(values)
    if config.scheme == "fock" and config.cutoff is None:
        config.cutoff = 4
    config.validate()
    return config


def _fringe_dict(f: FringeSummary) -> dict:
    return {"mean_offset": f.mean_offset, "amplitude": f.amplitude, "peak_phase": f.peak_phase}


def distribution_document(dist: PhaseDistribution, extra: dict | None = None) -> dict:
    doc = {
        "grid_points": dist.grid.n_points,
        "phi": dist.phi.tolist(),
        "density": dist.density.tolist(),
        "fringe": _fringe_dict(fringe_fit(dist)),
    }
    doc.update(extra or {})
    return doc


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(dist: PhaseDistribution) -> str:
    rows = ["phi,density"]
    rows += [f"{p:.12g},{d:.15g}" for p, d in zip(dist.phi, dist.density)]
    return "\n".join(rows) + "\n"


def emit_distribution(dist: PhaseDistribution, fmt: str = "csv", path=None, extra: dict | None = None) -> str:
    """Serialize ``dist`` as CSV or JSON, writing atomically to ``path`` when given.

    JSON floats use ``repr`` precision, so a round trip is bit-exact.
    """
    if fmt == "csv":
        text = format_csv(dist)
    elif fmt == "json":
        text = json.dumps(distribution_document(dist, extra), indent=1) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        _atomic_write(Path(path), text)
    return text


def _provenance(config: ExperimentConfig) -> dict:
    return {
        "config": config.echo(),
        "version": __version__,
        "numpy": np.__version__,
        "tail_tolerance": 1e-10,
        "quadrature_tolerance": config.tolerance,
    }


def _pair(config: ExperimentConfig) -> CoherentPair:
    return CoherentPair(config.beta1, config.beta2)


def compute(config: ExperimentConfig) -> tuple[PhaseDistribution, dict]:
    """Run one non-``compare`` scheme; returns the distribution and JSON extras."""
    grid = PhaseGrid(config.grid_points)
    pair = _pair(config)
    extra: dict = {}
    scheme = config.scheme
    if scheme == "direct":
        dist = averaged_distribution(pair, config.policy, config.normalization, grid)
        extra["discarded_fraction"] = discarded_fraction(pair) if config.policy is DataPolicy.DISCARD_ORIGIN else 0.0
    elif scheme == "direct-strong":
        dist = direct_strong_limit(pair, grid)
    elif scheme == "direct-weak":
        summary = direct_weak_limit(pair, config.policy)
        dist = fringe_density(grid, summary.amplitude, summary.peak_phase)
    elif scheme == "indirect":
        dist = indirect_general(pair, IndirectConfig(config.lo_phase, grid, config.tolerance))
    elif scheme == "indirect-weak":
        summary = indirect_weak_limit(pair)
        dist = fringe_density(grid, summary.amplitude, summary.peak_phase)
    elif scheme == "fock":
        state = TwoModeFockState.coherent_product(config.beta1, config.beta2, config.cutoff)
        dist = tm_phase_distribution(state, config.policy, config.normalization, grid)
    elif scheme == "mc":
        result = empirical_phase_distribution(pair, config.policy, config.shots, config.seed, grid)
        dist = result.distribution
        extra["discarded_fraction"] = result.discarded_fraction
        extra["shots"] = result.shots
    else:
        raise ConfigError(f"scheme {scheme!r} has no single distribution")
    if scheme in ("direct-weak", "indirect-weak"):
        extra["fringe_exact"] = _fringe_dict(summary)
    extra["provenance"] = _provenance(config)
    return dist, extra


def run_compare(config: ExperimentConfig) -> dict:
    """Direct strong-oscillator limit against the general indirect result."""
    out_dir = Path(config.output_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = PhaseGrid(config.grid_points)
    pair = _pair(config)
    strong = direct_strong_limit(pair, grid)
    indirect = indirect_general(pair, IndirectConfig(config.lo_phase, grid, config.tolerance))
    emit_distribution(strong, "csv", out_dir / "direct_strong.csv")
    emit_distribution(indirect, "csv", out_dir / "indirect.csv")
    l1, linf = distribution_distances(strong, indirect)
    report = {
        "l1": l1,
        "linf": linf,
        "direct_strong_peak": strong.argmax_phase(),
        "indirect_peak": indirect.argmax_phase(),
        "provenance": _provenance(config),
    }
    _atomic_write(out_dir / "report.json", json.dumps(report, indent=1) + "\n")
    return report


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


_VALUE_FLAGS = ("--beta1", "--beta2", "--lo-phase")


def _attach_negative_values(argv: list[str]) -> list[str]:
    # argparse would read "-4+0i" as an option; glue it to its flag instead
    out: list[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_attach_negative_values(list(sys.argv[1:] if argv is None else argv)))
    try:
        config = config_from_args(args)
        if config.scheme == "compare":
            report = run_compare(config)
            print(json.dumps({"l1": report["l1"], "linf": report["linf"]}))
            return 0
        dist, extra = compute(config)
        text = emit_distribution(dist, config.format, config.output_path, extra)
        if config.output_path is None:
            sys.stdout.write(text)
        return 0
    except (QuadratureError, TailBoundError) as exc:
        return _error("non-convergence", str(exc), EXIT_NONCONVERGED)
    except (ConfigError, ValueError) as exc:
        return _error("invalid-config", str(exc), EXIT_INVALID)
    except OSError as exc:
        return _error("io", str(exc), EXIT_INVALID)


if __name__ == "__main__":
    sys.exit(main())
