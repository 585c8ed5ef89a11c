"""Config-driven scenario runner.

Usage:
    paritysim run <scenario.toml> --out DIR [--seed U64] [--threads N] [--no-plots]
    paritysim validate <scenario.toml>

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence.
Each run writes scenario CSVs, a ``summary.json`` with the headline numbers,
rendered PNG figures (unless ``--no-plots``), and one ``provenance.json``
echoing every resolved parameter so the run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, datafiles, plots
from .config import Scenario, load_scenario, validate_config
from .detector import (
    DetectorParams,
    herald,
    label_flip_probability,
    parity_train_expected,
    parity_train_sample,
    population_to_parity,
    readout_corrected,
    visibility,
)
from .errors import ConfigError, NotConverged, ParitySimError
from .fock import (
    DensityMatrix,
    FockSpace,
    cat_state,
    coherent_state,
    fidelity,
    fock_ket,
    photon_superposition,
)
from .seeding import derived_rng
from .tomography import (
    MomentTable,
    NoiseModel,
    SolverSettings,
    SourceScenario,
    conditioned_moments,
    g2_from_table,
    moments_from_records,
    phase_space_grid,
    readout_confusion,
    simulate_herald_records,
    simulate_heterodyne,
    synthesize_tomogram,
    theta_sweep_entries,
)

try:  # tomllib only needed here for the validate error path
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


def _pmap(threads: int, fn, items):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _detector_params(section: dict, ideal: bool = False, eta: float | None = None) -> DetectorParams:
    if ideal:
        return DetectorParams.ideal(eta=section["eta"] if eta is None else eta)
    return DetectorParams(
        t_w=section["t_w"],
        t2_star=section["t2_star"],
        t1=section["t1"],
        f_ro=section["f_ro"],
        p_e_th=section["p_e_th"],
        delta=section["delta"],
        eta=section["eta"] if eta is None else eta,
    )


def _sub_seed(seed: int, tag: int) -> int:
    return int(derived_rng(seed, tag).integers(2**63))


# ---------------------------------------------------------------------------
# scenario runners


def _run_parity_train(sc: Scenario, out: Path, seed: int, threads: int, render: bool):
    cfg = sc.section("parity_train")
    det = _detector_params(sc.section("detector"), ideal=cfg["ideal_detection"])
    flip = label_flip_probability(det)
    rows = []
    for n in range(cfg["max_pulses"] + 1):
        mc, stderr = parity_train_sample(n, det, cfg["shots"], seed=_sub_seed(seed, 100 + n))
        corrected = (
            mc
            if flip == 0.0
            else population_to_parity(0.5 * (1.0 + mc), 1.0 - flip, flip)
        )
        rows.append(
            {
                "n_pulses": n,
                "parity_ideal": (-1.0) ** n,
                "parity_expected": parity_train_expected(n, det.eta),
                "parity_mc": mc,
                "parity_mc_stderr": stderr,
                "parity_corrected": corrected,
            }
        )
    outputs = []
    csv_path = out / "parity_train.csv"
    import csv as _csv

    with csv_path.open("w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (v if isinstance(v, int) else f"{v:.12g}") for k, v in row.items()})
    datafiles.write_sidecar(csv_path, {"seed": seed, "eta": det.eta, "shots": cfg["shots"]})
    outputs.append(csv_path)
    if render:
        outputs.append(plots.parity_train_figure(out / "parity_train.png", rows))
    summary = {
        "eta": det.eta,
        "assignment_flip_probability": flip,
        "parity_per_n": {str(r["n_pulses"]): r["parity_corrected"] for r in rows},
    }
    return summary, outputs


def _wigner_state(sc: Scenario, space: FockSpace) -> DensityMatrix:
    cfg = sc.section("wigner_map")
    alpha = complex(cfg["alpha_re"], cfg["alpha_im"])
    name = cfg["state"]
    if name == "vacuum":
        return fock_ket(0, space).density()
    if name == "one":
        return fock_ket(1, space).density()
    if name == "superposition":
        return photon_superposition(sc.section("source")["theta"], space).density()
    if name == "coherent":
        return coherent_state(alpha, space).density()
    if name == "cat-even":
        return cat_state(alpha, +1, space).density()
    return cat_state(alpha, -1, space).density()


def _run_wigner_map(sc: Scenario, out: Path, seed: int, threads: int, render: bool):
    grid_cfg = sc.section("grid")
    ch = sc.section("channels")
    space = FockSpace(n_max=sc.section("run")["n_max"])
    rho = _wigner_state(sc, space)
    grid, i_axis, q_axis = phase_space_grid(grid_cfg["half_extent"], grid_cfg["points"])
    shots = sc.section("wigner_map")["shots"] or None
    tomogram = synthesize_tomogram(rho, ch["eta"], ch["f_mm"], grid, shots=shots, seed=seed)
    outputs = [
        datafiles.write_tomogram_csv(
            out / "wigner_map.csv",
            tomogram,
            {
                "seed": seed,
                "state": sc.section("wigner_map")["state"],
                "shots": shots or 0,
                "forward_model": "kraus-displaced-parity",
            },
        )
    ]
    values_2d = tomogram.values.reshape(len(q_axis), len(i_axis))
    origin = float(values_2d[len(q_axis) // 2, len(i_axis) // 2])
    if render:
        outputs.append(plots.wigner_map_figure(out / "wigner_map.png", i_axis, q_axis, values_2d))
    summary = {
        "state": sc.section("wigner_map")["state"],
        "forward_model": "kraus-displaced-parity",
        "origin_value": origin,
        "min_value": float(tomogram.values.min()),
        "max_value": float(tomogram.values.max()),
    }
    if sc.section("wigner_map")["audit_convolution"]:
        # Comparison path: apply the Gaussian-kernel convolution model to
        # the ideal Wigner map of the same state and report its measured
        # normalization next to the analytic kernel weight.
        from math import pi

        from .channels import wprime_normalization_report
        from .fock import wigner_map as _wigner_values

        ideal = (2.0 / pi) * _wigner_values(rho, grid.reshape(len(q_axis), len(i_axis)))
        summary["convolution_audit"] = wprime_normalization_report(
            i_axis, q_axis, ideal, ch["eta"]
        )
    return summary, outputs


def _run_theta_sweep(sc: Scenario, out: Path, seed: int, threads: int, render: bool):
    cfg = sc.section("theta_sweep")
    ch = sc.section("channels")
    src = sc.section("source")
    run = sc.section("run")
    grid, _, _ = phase_space_grid(sc.section("grid")["half_extent"], sc.section("grid")["points"])
    scenario = SourceScenario(
        theta=src["theta"],
        two_photon_contamination=src["two_photon_contamination"],
        t_p=src["t_p"],
        kappa_p=src["kappa_p"],
    )
    entries, phase = theta_sweep_entries(
        cfg["thetas"],
        scenario,
        SolverSettings(seed=_sub_seed(seed, 1)),
        eta=ch["eta"],
        f_mm=ch["f_mm"],
        grid=grid,
        shots=cfg["shots"] or None,
        seed=seed,
        sim_n_max=run["n_max"],
        recon_n_max=run["recon_n_max"],
        threads=threads,
    )
    import csv as _csv

    csv_path = out / "theta_sweep.csv"
    fields = ["theta", "rho11", "re_rho01", "im_rho01", "fidelity", "ideal_rho11", "ideal_re_rho01"]
    with csv_path.open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(fields)
        for e in entries:
            writer.writerow([f"{getattr(e, f):.12g}" for f in fields])
    datafiles.write_sidecar(csv_path, {"seed": seed, "eta": ch["eta"], "f_mm": ch["f_mm"], "shots": cfg["shots"]})
    outputs = [csv_path]
    if render:
        outputs.append(plots.theta_sweep_figure(out / "theta_sweep.png", entries))
    summary = {
        "phase_correction": phase,
        "fidelities": {f"{e.theta:.6g}": e.fidelity for e in entries},
        "mean_fidelity": float(np.mean([e.fidelity for e in entries])),
    }
    return summary, outputs


def _run_herald_cats(sc: Scenario, out: Path, seed: int, threads: int, render: bool):
    cfg = sc.section("herald_cats")
    det = _detector_params(sc.section("detector"))
    space = FockSpace(n_max=sc.section("run")["n_max"])
    alpha = complex(cfg["alpha_re"], cfg["alpha_im"])
    rho_in = coherent_state(alpha, space).density()
    pair = herald(rho_in, det, space)
    corrected = readout_corrected(pair, det.f_ro)
    ideal_even = cat_state(alpha, +1, space).density()
    ideal_odd = cat_state(alpha, -1, space).density()
    outputs = []
    summary = {
        "alpha": {"re": alpha.real, "im": alpha.imag},
        "p_even": pair[0].probability,
        "p_odd": pair[1].probability,
        "visibility_uncorrected": visibility(pair[0].post_state, pair[1].post_state),
        "visibility_corrected": visibility(corrected[0].post_state, corrected[1].post_state),
        "fidelity_even_uncorrected": fidelity(pair[0].post_state, ideal_even),
        "fidelity_odd_uncorrected": fidelity(pair[1].post_state, ideal_odd),
        "fidelity_even_corrected": fidelity(corrected[0].post_state, ideal_even),
        "fidelity_odd_corrected": fidelity(corrected[1].post_state, ideal_odd),
    }
    keep = sc.section("run")["recon_n_max"] + 1
    for tag, result in (("even", corrected[0]), ("odd", corrected[1])):
        block = result.post_state.entries[:keep, :keep]
        outputs.append(
            datafiles.write_density_matrix_csv(
                out / f"herald_{tag}.csv",
                block,
                {"seed": seed, "outcome": tag, "readout_corrected": True},
            )
        )
        if render:
            outputs.append(
                plots.density_matrix_figure(
                    out / f"herald_{tag}.png", block, f"{tag}-heralded state (corrected)"
                )
            )
    return summary, outputs


_G2_CASES = ("coherent", "mixture", "even", "odd")


def _g2_analytic(case: str, power: float) -> float:
    if case in ("coherent", "mixture"):
        return 1.0
    t = math.tanh(power)
    return t**2 if case == "odd" else 1.0 / t**2


def _run_g2_sweep(sc: Scenario, out: Path, seed: int, threads: int, render: bool):
    cfg = sc.section("g2_sweep")
    det = _detector_params(sc.section("detector"), ideal=cfg["ideal_detection"])
    noise = NoiseModel(sc.section("noise")["n0"])
    space = FockSpace(n_max=sc.section("run")["n_max"])
    shots = cfg["shots"]
    vacuum = simulate_heterodyne(
        fock_ket(0, space).density(), noise, shots, seed=_sub_seed(seed, 2)
    )
    confusion = readout_confusion(det.f_ro)

    def one_power(item):
        idx, power = item
        alpha = math.sqrt(power)
        coh = simulate_heterodyne(
            coherent_state(alpha, space).density(), noise, shots, seed=_sub_seed(seed, 10 + idx)
        )
        hrec = simulate_herald_records(
            alpha, det, noise, shots, seed=_sub_seed(seed, 50 + idx), space=space
        )
        even, odd = conditioned_moments(hrec, vacuum, max_order=4, confusion=confusion)
        tables = {
            "coherent": moments_from_records(coh, vacuum, max_order=4),
            "mixture": moments_from_records(hrec, vacuum, max_order=4),
            "even": even,
            "odd": odd,
        }
        rows = []
        for case in _G2_CASES:
            g, err = g2_from_table(tables[case])
            rows.append(
                {
                    "power": power,
                    "case": case,
                    "g2": g,
                    "stderr": err,
                    "g2_analytic": _g2_analytic(case, power),
                }
            )
        return rows

    all_rows = _pmap(threads, one_power, list(enumerate(cfg["powers"])))
    rows = [r for chunk in all_rows for r in chunk]
    import csv as _csv

    csv_path = out / "g2_sweep.csv"
    with csv_path.open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["power", "case", "g2", "stderr", "g2_analytic"])
        for r in rows:
            writer.writerow(
                [f"{r['power']:.12g}", r["case"], f"{r['g2']:.12g}", f"{r['stderr']:.12g}", f"{r['g2_analytic']:.12g}"]
            )
    datafiles.write_sidecar(csv_path, {"seed": seed, "shots": shots, "n0": noise.n0})
    outputs = [csv_path]
    if render:
        outputs.append(plots.g2_sweep_figure(out / "g2_sweep.png", rows))
    summary = {
        "g2": {f"{r['power']:.6g}/{r['case']}": r["g2"] for r in rows},
        "shots_per_state": shots,
    }
    return summary, outputs


def _run_moments(sc: Scenario, out: Path, seed: int, threads: int, render: bool):
    cfg = sc.section("moments")
    det = _detector_params(sc.section("detector"))
    noise = NoiseModel(sc.section("noise")["n0"])
    space = FockSpace(n_max=sc.section("run")["n_max"])
    alpha = complex(cfg["alpha_re"], cfg["alpha_im"])
    shots = cfg["shots"]
    vacuum = simulate_heterodyne(fock_ket(0, space).density(), noise, shots, seed=_sub_seed(seed, 2))
    outputs = []
    tables: dict[str, MomentTable] = {}
    if cfg["herald"]:
        records = simulate_herald_records(alpha, det, noise, shots, seed=_sub_seed(seed, 3), space=space)
        even, odd = conditioned_moments(
            records, vacuum, max_order=cfg["max_order"], confusion=readout_confusion(det.f_ro)
        )
        tables["even"] = even
        tables["odd"] = odd
    else:
        records = simulate_heterodyne(
            coherent_state(alpha, space).density(), noise, shots, seed=_sub_seed(seed, 3)
        )
    tables["pooled"] = moments_from_records(records, vacuum, max_order=cfg["max_order"])
    outputs.append(
        datafiles.write_records_csv(
            out / "records.csv",
            records,
            {"seed": seed, "n0": noise.n0, "alpha_re": alpha.real, "alpha_im": alpha.imag},
            max_rows=cfg["record_rows"] or None,
        )
    )
    for name, table in tables.items():
        outputs.append(
            datafiles.write_moment_table_csv(
                out / f"moments_{name}.csv", table, {"seed": seed, "class": name}
            )
        )
    if render:
        outputs.append(plots.moments_figure(out / "moments.png", tables))
    summary = {}
    for name, table in tables.items():
        entry = {"n_bar": table.value(1, 1).real}
        try:
            g, err = g2_from_table(table)
            entry["g2"] = g
            entry["g2_stderr"] = err
        except (ParitySimError, KeyError):
            pass  # table too shallow for g2 or state is vacuum
        summary[name] = entry
    return summary, outputs


_RUNNERS = {
    "parity-train": _run_parity_train,
    "wigner-map": _run_wigner_map,
    "theta-sweep": _run_theta_sweep,
    "herald-cats": _run_herald_cats,
    "g2-sweep": _run_g2_sweep,
    "moments": _run_moments,
}


# ---------------------------------------------------------------------------
# entry points


def run_scenario(sc: Scenario, out_dir: Path, seed: int, threads: int = 1, render: bool = True) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, outputs = _RUNNERS[sc.name](sc, out_dir, seed, threads, render)
    summary_path = datafiles.write_json(out_dir / "summary.json", {"scenario": sc.name, **summary})
    outputs.append(summary_path)
    provenance = {
        "scenario": sc.name,
        "seed": seed,
        "threads": threads,
        "package_version": __version__,
        "parameters": sc.params,
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    datafiles.write_json(out_dir / "provenance.json", provenance)
    return summary


def _cmd_run(args) -> int:
    sc = load_scenario(args.config)
    for warning in sc.report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    seed = args.seed if args.seed is not None else sc.section("run")["seed"]
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("PARITY_SIM_THREADS", "1"))
    run_scenario(sc, Path(args.out), seed=seed, threads=max(1, threads), render=not args.no_plots)
    print(f"{sc.name}: wrote outputs to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    path = Path(args.config)
    if not path.exists():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return 2
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        print(f"error: invalid TOML: {exc}", file=sys.stderr)
        return 2
    _, _, report = validate_config(raw)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paritysim",
        description="Scenario runner for the parity-detection simulation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config and write its outputs")
    p_run.add_argument("config", type=Path, help="scenario TOML file")
    p_run.add_argument("--out", type=Path, required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_run.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker cap (falls back to PARITY_SIM_THREADS, then 1)",
    )
    p_run.add_argument("--no-plots", action="store_true", help="skip PNG rendering")
    p_run.set_defaults(func=_cmd_run)
    p_val = sub.add_parser("validate", help="check a scenario config without side effects")
    p_val.add_argument("config", type=Path)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NotConverged as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
