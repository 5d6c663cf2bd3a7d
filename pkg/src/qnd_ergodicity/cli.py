"""Command-line entry point.

    qnd-ergodicity moments     --config run.json --out results/
    qnd-ergodicity pdf qbar    --config run.json --out results/
    qnd-ergodicity ergodicity  --config run.json --seed 7 --workers 4
    qnd-ergodicity recover     --config run.json --monte-carlo
    qnd-ergodicity sample      --config run.json --format csv

The config file is JSON with keys ``eigenvalues``, ``weights``, optional
``amplitudes`` (numbers or ``[re, im]`` pairs), ``epsilon``, ``sigma``,
``n_probes``, and optional sections ``ensemble`` (``m``, ``seed``,
``workers``) and ``output`` (``directory``, ``format``). Command-line flags
override the file.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 domain error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analytic, montecarlo
from .errors import ConfigError, LengthMismatch, QNDError
from .export import sample_curve, write_csv, write_json
from .model import ObservableSpectrum, ProbeConfig, Realization, validate_spectrum

DEFAULTS = {"epsilon": 1.0, "sigma": 1.0, "n_probes": 10, "m": 10_000, "seed": 42, "workers": 1}
EXIT_CONFIG, EXIT_IO, EXIT_DOMAIN = 2, 3, 4

_TOP_KEYS = {"eigenvalues", "weights", "amplitudes", "epsilon", "sigma", "n_probes", "ensemble", "output"}
_ENSEMBLE_KEYS = {"m", "seed", "workers"}
_OUTPUT_KEYS = {"directory", "format"}


@dataclass(frozen=True)
class RunConfig:
    spectrum: ObservableSpectrum
    probe: ProbeConfig
    m: int
    seed: int
    workers: int
    out_dir: Path
    fmt: str

    @property
    def rng(self) -> montecarlo.RngSpec:
        return montecarlo.RngSpec(self.seed)

    def echo(self) -> dict:
        # workers is left out: it must not change any output byte
        return {
            **self.spectrum.to_dict(),
            **self.probe.to_dict(),
            "ensemble": {"m": self.m, "seed": self.seed},
        }


def _parse_amplitudes(raw):
    if raw is None:
        return None
    if not isinstance(raw, list):
        raise ConfigError("amplitudes must be a list")
    out = []
    for c in raw:
        if isinstance(c, (int, float)) and not isinstance(c, bool):
            out.append(complex(c))
        elif isinstance(c, list) and len(c) == 2 and all(isinstance(v, (int, float)) for v in c):
            out.append(complex(c[0], c[1]))
        else:
            raise ConfigError(f"amplitude {c!r} is neither a number nor a [re, im] pair")
    return out


def _int(value, name, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def load_config(path: Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON run config and apply command-line overrides.

    Raises
    ------
    ConfigError
        On missing or malformed keys, or an invalid spectrum or probe setup.
    OSError
        If the file cannot be read.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    ensemble = raw.get("ensemble", {}) or {}
    output = raw.get("output", {}) or {}
    if not isinstance(ensemble, dict) or set(ensemble) - _ENSEMBLE_KEYS:
        raise ConfigError(f"ensemble section may only contain {sorted(_ENSEMBLE_KEYS)}")
    if not isinstance(output, dict) or set(output) - _OUTPUT_KEYS:
        raise ConfigError(f"output section may only contain {sorted(_OUTPUT_KEYS)}")

    for key in ("eigenvalues", "weights"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")
        if not isinstance(raw[key], list):
            raise ConfigError(f"{key} must be a list of numbers")
    try:
        spectrum = validate_spectrum(raw["eigenvalues"], raw["weights"], _parse_amplitudes(raw.get("amplitudes")))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid spectrum: {exc}") from exc

    def pick(key, section=None):
        if key in overrides:
            return overrides[key]
        src = raw if section is None else section
        return src.get(key, DEFAULTS.get(key))

    n_probes = _int(pick("n_probes"), "n_probes", 1)
    try:
        probe = ProbeConfig(pick("epsilon"), pick("sigma"), n_probes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    m = _int(pick("m", ensemble), "m", 1)
    seed = _int(pick("seed", ensemble), "seed", 0)
    if seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits")
    workers = _int(pick("workers", ensemble), "workers", 1)
    fmt = pick("format", output) or "csv"
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    out_dir = Path(pick("directory", output) or ".")
    return RunConfig(spectrum, probe, m, seed, workers, out_dir, fmt)


def cmd_moments(cfg: RunConfig) -> list[Path]:
    payload = {
        "config": cfg.echo(),
        "n_critical": cfg.probe.n_critical,
        "probe_moments": analytic.probe_moments(cfg.spectrum, cfg.probe).to_dict(),
        "qbar_statistics": analytic.qbar_statistics(cfg.spectrum, cfg.probe).to_dict(),
    }
    return [write_json(cfg.out_dir / "moments.json", payload)]


def _curve_out(cfg: RunConfig, stem: str, x, y, meta: dict) -> list[Path]:
    if cfg.fmt == "json":
        return [write_json(cfg.out_dir / f"{stem}.json", {**meta, "x": x, "density": y})]
    return [write_csv(cfg.out_dir / f"{stem}.csv", ["x", "density"], zip(x, y))]


def cmd_pdf(
    cfg: RunConfig,
    what: str,
    q1: float | None = None,
    n_probes: int | None = None,
    qbar: float | None = None,
    positions: Sequence[float] | None = None,
) -> list[Path]:
    """Write the selected density curve, density matrix or posterior."""
    spec, probe = cfg.spectrum, cfg.probe
    if what == "qbar":
        x, y = sample_curve(analytic.qbar_density(spec, probe))
        return _curve_out(cfg, "pdf_qbar", x, y, {"n_probes": probe.n_probes})
    if what == "qbar_given_q1":
        if q1 is None:
            raise ConfigError("pdf qbar_given_q1 needs --q1")
        if probe.n_probes == 1:
            raise ConfigError("with one probe the time average equals Q_1; there is no density to sample")
        x, y = sample_curve(analytic.qbar_density_given_first(probe, q1))
        return _curve_out(cfg, "pdf_qbar_given_q1", x, y, {"n_probes": probe.n_probes, "q1": q1})
    if what == "rho":
        n = probe.n_probes if n_probes is None else n_probes
        if n < 0:
            raise ConfigError("--n must be >= 0")
        rho = analytic.reduced_density(spec, probe, n)
        payload = {
            "n_probes": n,
            "n_critical": probe.n_critical,
            "purity": analytic.purity(rho),
            **rho.to_json_dict(),
        }
        return [write_json(cfg.out_dir / "rho.json", payload)]
    if what == "decimation":
        if (qbar is None) == (positions is None):
            raise ConfigError("pdf decimation needs exactly one of --qbar or --positions")
        if positions is not None:
            if len(positions) != probe.n_probes:
                raise LengthMismatch(f"got {len(positions)} positions, config has n_probes={probe.n_probes}")
            post = analytic.decimation(spec, probe, positions)
            qbar_used = float(np.mean(positions))
        else:
            post = analytic.decimation(spec, probe, qbar=qbar)
            qbar_used = qbar
        if cfg.fmt == "json":
            payload = {
                "n_probes": probe.n_probes,
                "qbar": qbar_used,
                "eigenvalues": spec.eigenvalues,
                "posterior": post,
            }
            if positions is not None:
                payload["trajectory"] = montecarlo.decimation_trajectory(
                    spec, probe, Realization(0, positions)
                )
            return [write_json(cfg.out_dir / "decimation.json", payload)]
        return [write_csv(cfg.out_dir / "decimation.csv", ["eigenvalue", "posterior"], zip(spec.eigenvalues, post))]
    raise ConfigError(f"unknown pdf kind {what!r}")


def _report_text(cfg: RunConfig, report, comparison: dict) -> str:
    a, e, z = comparison["analytic"], comparison["empirical"], comparison["discrepancy_se"]
    lines = [
        "Ergodicity test for the time average of N probe positions",
        "",
        f"eigenvalues        {cfg.spectrum.eigenvalues.tolist()}",
        f"weights            {cfg.spectrum.weights.tolist()}",
        f"epsilon, sigma, N  {cfg.probe.epsilon!r}, {cfg.probe.sigma!r}, {cfg.probe.n_probes}",
        f"N_cr               {cfg.probe.n_critical!r}",
        f"realizations, seed {report.n_realizations}, {cfg.seed}",
        "",
        f"mean of Qbar       analytic {a['mean']:.6g}   empirical {e['mean']:.6g} +/- {e['mean_se']:.3g}   ({z['mean']:+.2f} SE)",
        f"var of Qbar        analytic {a['variance']:.6g}   empirical {e['variance']:.6g} +/- {e['variance_se']:.3g}   ({z['variance']:+.2f} SE)",
        f"var/eps^2 - N_cr/N analytic {comparison['var_a']:.6g}   empirical {e['excess_variance_over_eps2']:.6g}",
        "",
        "peak occupancy:",
    ]
    for (n, frac), se in zip(report.peak_occupancy, report.peak_occupancy_se):
        lines.append(
            f"  a={float(cfg.spectrum.eigenvalues[n])!r:<10} W={cfg.spectrum.weights[n]:.6g}  fraction={frac:.6g} +/- {se:.2g}"
        )
    lines.append(f"  unassigned fraction={report.unassigned_fraction:.6g}")
    lines += [
        "",
        f"excess variance: {report.decision_statistic:.2f} SE (threshold {montecarlo.VERDICT_THRESHOLD_SE:g} SE)",
        f"verdict: {report.verdict.value}",
    ]
    return "\n".join(lines) + "\n"


def cmd_ergodicity(cfg: RunConfig) -> list[Path]:
    report = montecarlo.run_ensemble(cfg.spectrum, cfg.probe, cfg.m, cfg.rng, cfg.workers)
    comparison = montecarlo.compare_with_analytic(cfg.spectrum, cfg.probe, report)
    payload = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "report": report.to_json_dict(),
        "comparison": comparison,
        "verdict": report.verdict.value,
    }
    json_path = write_json(cfg.out_dir / "report.json", payload)
    txt_path = cfg.out_dir / "report.txt"
    txt_path.write_text(_report_text(cfg, report, comparison), encoding="utf-8")
    return [json_path, txt_path]


def cmd_recover(cfg: RunConfig, monte_carlo: bool = False) -> list[Path]:
    weights = cfg.spectrum.weights
    recovered = analytic.recover_born_weights(cfg.spectrum, cfg.probe)
    payload = {
        "config": cfg.echo(),
        "input_weights": weights,
        "quadrature": {
            "weights": recovered,
            "max_abs_deviation": float(np.max(np.abs(recovered - weights))),
        },
    }
    if monte_carlo:
        mc, se = montecarlo.monte_carlo_recovery(cfg.spectrum, cfg.probe, cfg.m, cfg.rng, cfg.workers)
        dev = np.abs(mc - recovered)
        with np.errstate(divide="ignore", invalid="ignore"):
            dev_se = np.where(se > 0, dev / se, np.where(dev == 0, 0.0, np.inf))
        payload["monte_carlo"] = {
            "m": cfg.m,
            "seed": cfg.seed,
            "weights": mc,
            "standard_errors": se,
            "max_abs_deviation": float(np.max(np.abs(mc - weights))),
            "max_deviation_from_quadrature_se": float(np.max(dev_se)),
        }
    return [write_json(cfg.out_dir / "recovered.json", payload)]


def cmd_sample(cfg: RunConfig, show_branch: bool = False, show_positions: bool = False) -> list[Path]:
    samples = montecarlo.simulate(
        cfg.spectrum, cfg.probe, cfg.m, cfg.rng, cfg.workers, keep_positions=show_positions
    )
    peaks = analytic.assign_peaks(cfg.spectrum, cfg.probe, samples.qbar)
    header = (["branch"] if show_branch else []) + ["qbar", "assigned_peak"]
    if show_positions:
        header += [f"q{i + 1}" for i in range(cfg.probe.n_probes)]

    def rows():
        for j in range(len(samples)):
            row = [int(samples.branch[j])] if show_branch else []
            row += [float(samples.qbar[j]), int(peaks[j]) if peaks[j] >= 0 else None]
            if show_positions:
                row += samples.positions[j].tolist()
            yield row

    if cfg.fmt == "json":
        payload = {"config": cfg.echo(), "columns": header, "rows": list(rows())}
        return [write_json(cfg.out_dir / "samples.json", payload)]
    return [write_csv(cfg.out_dir / "samples.csv", header, rows())]


def _positions_arg(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"positions must be comma-separated numbers: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help=f"64-bit RNG seed (default {DEFAULTS['seed']})")
    common.add_argument("--workers", type=int, help="sampling threads; never changes results (default 1)")
    common.add_argument("--format", choices=("csv", "json"), help="curve/sample output format (default csv)")
    common.add_argument("--m", type=int, help=f"number of realizations (default {DEFAULTS['m']})")

    parser = argparse.ArgumentParser(
        prog="qnd-ergodicity",
        description=(
            "Sequential QND measurements with N Gaussian probes: analytic distributions, "
            "ensemble simulation and ergodicity tests. Unspecified parameters default to "
            "epsilon=1, sigma=1, n_probes=10, m=10000, seed=42."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("moments", parents=[common], help="probe moments and time-average statistics")
    pdf = sub.add_parser("pdf", parents=[common], help="density curves, density matrix or posterior")
    pdf.add_argument("what", choices=("qbar", "qbar_given_q1", "rho", "decimation"))
    pdf.add_argument("--q1", type=float, help="first probe position for qbar_given_q1")
    pdf.add_argument("--n", type=int, dest="n_override", help="probe count for rho (0 allowed)")
    pdf.add_argument("--qbar", type=float, help="time average for decimation")
    pdf.add_argument("--positions", type=_positions_arg, help="comma-separated probe positions for decimation")
    sub.add_parser("ergodicity", parents=[common], help="Monte Carlo ergodicity verdict")
    rec = sub.add_parser("recover", parents=[common], help="recover Born weights from decimation posteriors")
    rec.add_argument("--monte-carlo", action="store_true", help="also run the Monte Carlo cross-check")
    smp = sub.add_parser("sample", parents=[common], help="dump raw realizations")
    smp.add_argument("--show-branch", action="store_true", help="include the latent branch index")
    smp.add_argument("--positions", action="store_true", dest="show_positions", help="include all probe positions")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "workers": args.workers, "format": args.format, "m": args.m}
    if args.out is not None:
        overrides["directory"] = str(args.out)
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "moments":
            paths = cmd_moments(cfg)
        elif args.command == "pdf":
            paths = cmd_pdf(cfg, args.what, args.q1, args.n_override, args.qbar, args.positions)
        elif args.command == "ergodicity":
            if cfg.m < 2:
                raise ConfigError("ergodicity needs m >= 2")
            paths = cmd_ergodicity(cfg)
        elif args.command == "recover":
            paths = cmd_recover(cfg, args.monte_carlo)
        else:
            paths = cmd_sample(cfg, args.show_branch, args.show_positions)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QNDError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
