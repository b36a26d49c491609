"""Command-line driver: each experiment writes CSVs, a JSON sidecar
that reproduces the run bit-identically, and an SVG figure.

Commands: parabola, sigma-star, synth2d, linreg, mnist, rmsprop, plot,
rerun.  Trapped or diverged runs are recorded in the outputs and still
exit 0; only parse and I/O failures exit nonzero.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import report
from .landscapes import (
    linreg_hessian_spectrum,
    linreg_landscape,
    make_linreg_dataset,
    parabola,
    synth2d,
)
from .fitting import extract_timescale, find_sigma_star_numeric, rmsprop_sigma_star_scan
from .mlp import MlpSpec, load_mnist_idx, train
from .optim import (
    MOMENTUM_SUPERACCEL,
    RMSPROP_SUPERACCEL,
    OptimConfig,
    SigmaSchedule,
    config_to_dict,
    run_trajectory,
)
from .oscillator import sigma_star_formula
from .serialize import write_csv, write_json, read_json

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _parse_sigma_list(text: str) -> list[float]:
    values = [float(v) for v in text.split(",") if v.strip() != ""]
    if not values:
        raise ValueError("sigma list is empty")
    return values


def _sigmas_from(args: argparse.Namespace, default: str) -> list[float]:
    """Merge --sigma and --sigma-list; fall back to the command default."""
    values: list[float] = []
    if getattr(args, "sigma", None) is not None:
        values.append(args.sigma)
    if args.sigma_list is not None:
        values.extend(_parse_sigma_list(args.sigma_list))
    if not values:
        values = _parse_sigma_list(default)
    return values


def _parse_schedule(text: str) -> dict:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("schedule must be start:end:steps")
    return {
        "sigma_start": float(parts[0]),
        "sigma_end": float(parts[1]),
        "decay_steps": int(parts[2]),
        "mode": "linear",
    }


def _sig_tag(sigma: float) -> str:
    return f"{sigma:g}".replace("-", "m")


def _write_sidecar(out_dir: Path, command: str, params: dict) -> None:
    write_json(out_dir / "sidecar.json", {"command": command, "params": params})


def _fit_to_dict(fit) -> dict:
    return {
        "T": fit.T,
        "omega_bar": fit.omega_bar,
        "delta": fit.delta,
        "amplitude": fit.amplitude,
        "rmse": fit.rmse,
        "converged": fit.converged,
        "method": fit.method,
    }


def _scan_files(out_dir: Path, tag: str, scan) -> None:
    rows = [
        (s, t, m != "skipped")
        for s, t, m in zip(scan.sigma_grid, scan.timescales, scan.methods)
    ]
    write_csv(out_dir / f"scan_{tag}.csv", ["sigma", "T", "converged"], rows)
    write_json(
        out_dir / f"scan_{tag}.json",
        {
            "k_eta": scan.k_eta,
            "g": scan.g,
            "sigma_star": scan.sigma_star,
            "well_defined": scan.well_defined,
            "methods": list(scan.methods),
        },
    )


# ----------------------------------------------------------------- parabola


def run_parabola(params: dict, out_dir: Path) -> None:
    k_eta = params["k_eta"]
    g = params["g"]
    steps = params["steps"]
    land = parabola(k_eta)
    fits = []
    theta_series = {}
    for sigma in params["sigma_list"]:
        config = OptimConfig(eta=1.0, g=g, sigma=sigma, variant=MOMENTUM_SUPERACCEL)
        traj = run_trajectory(land, config, [1.0], steps)
        traj.to_csv(out_dir / f"traj_sigma{_sig_tag(sigma)}.csv")
        entry = {
            "sigma": sigma,
            "terminated": traj.terminated,
            "config": config_to_dict(config),
        }
        if traj.terminated != "diverged":
            entry["fit"] = _fit_to_dict(extract_timescale(traj))
        fits.append(entry)
        theta_series[f"sigma={sigma:g}"] = (traj.iters, traj.thetas[:, 0])
    write_json(out_dir / "fits.json", {"k_eta": k_eta, "g": g, "fits": fits})
    report.plot_series(
        out_dir / "theta.svg",
        theta_series,
        xlabel="iteration",
        ylabel="theta",
        title=f"parabola k_eta={k_eta:g}",
    )
    _write_sidecar(out_dir, "parabola", params)


# --------------------------------------------------------------- sigma-star


def run_sigma_star(params: dict, out_dir: Path) -> None:
    g = params["g"]
    rows = []
    t_series = {}
    for k_eta in params["k_eta_list"]:
        scan = find_sigma_star_numeric(
            k_eta,
            g,
            sigma_min=params["sigma_min"],
            sigma_max=params["sigma_max"],
            n_grid=params["n_grid"],
        )
        tag = f"keta{k_eta:g}"
        _scan_files(out_dir, tag, scan)
        numeric = scan.sigma_star if scan.well_defined else float("nan")
        rows.append(
            (
                k_eta,
                numeric,
                sigma_star_formula("ode1", k_eta, g),
                sigma_star_formula("ode2", k_eta, g),
                sigma_star_formula("ode3", k_eta, g),
            )
        )
        t_series[f"k_eta={k_eta:g}"] = (scan.sigma_grid, scan.timescales)
    write_csv(
        out_dir / "sigma_star.csv",
        ["k_eta", "numeric", "ode1", "ode2", "ode3"],
        rows,
    )
    report.plot_series(
        out_dir / "timescales.svg",
        t_series,
        xlabel="sigma",
        ylabel="T",
        title="relaxation timescale vs sigma",
    )
    _write_sidecar(out_dir, "sigma-star", params)


# ------------------------------------------------------------------ synth2d


def _run_2d(params: dict, out_dir: Path, variant: str, command: str) -> None:
    land = synth2d()
    start = np.asarray(params["start"], dtype=float)
    dist_series = {}
    summary = []
    for sigma in params["sigma_list"]:
        config = OptimConfig(
            eta=params["eta"],
            g=params["g"],
            sigma=sigma,
            variant=variant,
            beta2=params.get("beta2", 0.999),
            epsilon=params.get("epsilon", 1e-7),
        )
        traj = run_trajectory(land, config, start, params["steps"])
        traj.to_csv(out_dir / f"traj_sigma{_sig_tag(sigma)}.csv")
        summary.append(
            {
                "sigma": sigma,
                "terminated": traj.terminated,
                "final_dist": float(traj.dists[-1]),
                "config": config_to_dict(config),
            }
        )
        dist_series[f"sigma={sigma:g}"] = (traj.iters, traj.dists)
    write_json(
        out_dir / "summary.json",
        {"start": list(map(float, start)), "minimum": list(map(float, land.minimum_hint)), "runs": summary},
    )
    report.plot_series(
        out_dir / "dist.svg",
        dist_series,
        xlabel="iteration",
        ylabel="distance to minimum",
        title=f"{command}: distance to minimum",
        logy=True,
    )
    _write_sidecar(out_dir, command, params)


def run_synth2d(params: dict, out_dir: Path) -> None:
    _run_2d(params, out_dir, MOMENTUM_SUPERACCEL, "synth2d")


# ------------------------------------------------------------------- linreg


def run_linreg(params: dict, out_dir: Path) -> None:
    dataset = make_linreg_dataset(
        params["n_features"], params["n_data"], params["seed"]
    )
    dataset.to_csv(out_dir / "dataset.csv")
    land = linreg_landscape(dataset)
    theta0 = np.full(land.dim, params["theta0"])
    loss_columns = {}
    for sigma in params["sigma_list"]:
        config = OptimConfig(
            eta=params["eta"], g=params["g"], sigma=sigma,
            variant=MOMENTUM_SUPERACCEL,
        )
        traj = run_trajectory(land, config, theta0, params["steps"])
        loss_columns[sigma] = traj.losses
    n_rows = max(len(v) for v in loss_columns.values())
    header = ["iter"] + [f"loss_sigma{_sig_tag(s)}" for s in params["sigma_list"]]
    rows = []
    for i in range(n_rows):
        row = [i]
        for s in params["sigma_list"]:
            col = loss_columns[s]
            row.append(col[i] if i < len(col) else float("nan"))
        rows.append(row)
    write_csv(out_dir / "losses.csv", header, rows)

    spectrum = linreg_hessian_spectrum(dataset)
    write_json(
        out_dir / "spectrum.json",
        {
            "eigenvalues": [float(v) for v in spectrum.eigenvalues],
            "kappa_min": spectrum.kappa_min,
            "kappa_max": spectrum.kappa_max,
        },
    )
    iters = np.arange(n_rows)
    report.plot_series(
        out_dir / "loss.svg",
        {f"sigma={s:g}": (iters, loss_columns[s]) for s in params["sigma_list"]},
        xlabel="iteration",
        ylabel="loss",
        title="linear regression training loss",
        logy=True,
    )
    _write_sidecar(out_dir, "linreg", params)


# -------------------------------------------------------------------- mnist


def _resolve_mnist_dir(mnist_dir) -> Path:
    path = mnist_dir or os.environ.get("MNIST_DIR")
    if not path:
        raise FileNotFoundError(
            "MNIST directory not given: pass --mnist-dir or set MNIST_DIR"
        )
    path = Path(path)
    missing = [n for n in MNIST_FILES.values() if not (path / n).exists()]
    if missing:
        raise FileNotFoundError(
            f"missing IDX files in {path}: {missing} "
            "(see scripts/fetch_mnist.py for how to obtain them)"
        )
    return path


def run_mnist(params: dict, out_dir: Path) -> None:
    mnist_dir = _resolve_mnist_dir(params.get("mnist_dir"))
    train_set = load_mnist_idx(
        mnist_dir / MNIST_FILES["train_images"], mnist_dir / MNIST_FILES["train_labels"]
    )
    test_set = load_mnist_idx(
        mnist_dir / MNIST_FILES["test_images"], mnist_dir / MNIST_FILES["test_labels"]
    )
    if params.get("subset_train"):
        train_set = train_set.subset(params["subset_train"])
    if params.get("subset_test"):
        test_set = test_set.subset(params["subset_test"])

    sizes = tuple(int(v) for v in params["arch"].split("-"))
    batch_size = params["batch_size"]
    epochs = params["epochs"]
    steps_per_epoch = (
        1 if batch_size is None else math.ceil(train_set.count / batch_size)
    )

    sigma_entries = []
    if params.get("schedule"):
        sched = dict(params["schedule"])
        # the CLI schedule is denominated in epochs
        sched["decay_steps"] = sched["decay_steps"] * steps_per_epoch
        sigma_entries.append(("sched", None, SigmaSchedule(**sched)))
    for sigma in params.get("sigma_list") or []:
        sigma_entries.append((_sig_tag(sigma), sigma, None))

    acc_series = {}
    runs = []
    for tag, sigma, schedule in sigma_entries:
        for seed in params["seeds"]:
            config = OptimConfig(
                eta=params["eta"],
                g=params["g"],
                sigma=sigma if sigma is not None else 0.0,
                variant=MOMENTUM_SUPERACCEL,
                schedule=schedule,
            )
            history = train(
                MlpSpec(layer_sizes=sizes, seed=seed),
                train_set,
                test_set,
                config,
                batch_size=batch_size,
                epochs=epochs,
                shuffle_seed=seed,
            )
            name = f"mnist_sigma{tag}_seed{seed}"
            history.to_csv(out_dir / f"{name}.csv")
            runs.append(
                {
                    "sigma": sigma,
                    "schedule": params.get("schedule") if schedule else None,
                    "seed": seed,
                    "terminated": history.terminated,
                    "final_test_accuracy": float(history.test_accuracy[-1]),
                    "config": config_to_dict(config),
                }
            )
            acc_series[f"sigma={tag} seed={seed}"] = (
                history.epochs,
                history.test_accuracy,
            )
    write_json(out_dir / "summary.json", {"arch": params["arch"], "runs": runs})
    report.plot_series(
        out_dir / "accuracy.svg",
        acc_series,
        xlabel="epoch",
        ylabel="test accuracy",
        title=f"MNIST {params['arch']}",
    )
    _write_sidecar(out_dir, "mnist", params)


# ------------------------------------------------------------------ rmsprop


def run_rmsprop(params: dict, out_dir: Path) -> None:
    experiment = params["experiment"]
    if experiment == "parabola-scan":
        results = rmsprop_sigma_star_scan(
            params["eta_list"],
            k=params["k"],
            g=params["g"],
            beta2=params["beta2"],
            epsilon=params["epsilon"],
            sigma_min=params["sigma_min"],
            sigma_max=params["sigma_max"],
            n_grid=params["n_grid"],
        )
        rows = []
        etas = []
        stars = []
        for eta, scan in results:
            _scan_files(out_dir, f"eta{eta:g}", scan)
            rows.append(
                (eta, scan.sigma_star if scan.well_defined else float("nan"))
            )
            if scan.well_defined:
                etas.append(eta)
                stars.append(scan.sigma_star)
        write_csv(out_dir / "sigma_star_vs_eta.csv", ["eta", "sigma_star"], rows)
        report.plot_series(
            out_dir / "sigma_star.svg",
            {"sigma*": (etas, stars)},
            xlabel="eta",
            ylabel="sigma*",
            title=f"RMSProp optimal sigma (k={params['k']:g})",
        )
        _write_sidecar(out_dir, "rmsprop", params)
    elif experiment == "synth2d":
        _run_2d(params, out_dir, RMSPROP_SUPERACCEL, "rmsprop")
    else:
        raise ValueError(f"unknown rmsprop experiment {experiment!r}")


# --------------------------------------------------------------------- plot


def run_plot(params: dict, out_dir: Path) -> None:
    report.plot_csv(
        params["csv"],
        params["x"],
        params["y"],
        out_dir / params["out"],
        logy=params["logy"],
        title=params.get("title", ""),
    )
    _write_sidecar(out_dir, "plot", params)


_RUNNERS = {
    "parabola": run_parabola,
    "sigma-star": run_sigma_star,
    "synth2d": run_synth2d,
    "linreg": run_linreg,
    "mnist": run_mnist,
    "rmsprop": run_rmsprop,
    "plot": run_plot,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superacc",
        description="Lookahead-momentum optimization experiments; every "
        "command writes CSVs, an SVG figure, and a sidecar.json that "
        "re-runs it bit-identically via `superacc rerun`.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parabola", help="1-D parabola trajectories and fits")
    p.add_argument("--k-eta", type=float, default=0.01, help="curvature times learning rate")
    p.add_argument("--g", type=float, default=0.9, help="momentum coefficient")
    p.add_argument("--sigma", type=float, default=None, help="single sigma")
    p.add_argument("--sigma-list", default=None, help="comma-separated sigmas (default 1,9,20)")
    p.add_argument("--steps", type=int, default=800)
    _add_common(p)

    p = sub.add_parser("sigma-star", help="numeric vs closed-form optimal sigma")
    p.add_argument("--k-eta-list", default="0.01,0.05,0.1,0.25")
    p.add_argument("--g", type=float, default=0.9)
    p.add_argument("--sigma-min", type=float, default=0.5)
    p.add_argument("--sigma-max", type=float, default=15.0)
    p.add_argument("--n-grid", type=int, default=24)
    _add_common(p)

    p = sub.add_parser("synth2d", help="2-D valley trajectories and distances")
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--g", type=float, default=0.9)
    p.add_argument("--sigma", type=float, default=None, help="single sigma")
    p.add_argument("--sigma-list", default=None, help="comma-separated sigmas (default 0,0.9,2,4,7)")
    p.add_argument("--start", default="-1,-3.8", help="starting point x,y")
    p.add_argument("--steps", type=int, default=500)
    _add_common(p)

    p = sub.add_parser("linreg", help="51-parameter linear regression loss curves")
    p.add_argument("--eta", type=float, default=0.005)
    p.add_argument("--g", type=float, default=0.9)
    p.add_argument("--sigma", type=float, default=None, help="single sigma")
    p.add_argument("--sigma-list", default=None, help="comma-separated sigmas (default 0,1,2,4)")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--seed", type=int, default=20260101)
    p.add_argument("--n-features", type=int, default=50)
    p.add_argument("--n-data", type=int, default=1000)
    p.add_argument("--theta0", type=float, default=0.2)
    _add_common(p)

    p = sub.add_parser("mnist", help="train MLPs on MNIST IDX data")
    p.add_argument("--arch", default="784-30-10", help="e.g. 784-30-10 or 784-15-15-10")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--g", type=float, default=0.9)
    p.add_argument("--sigma", type=float, default=None, help="single sigma")
    p.add_argument("--sigma-list", default=None, help="comma-separated sigmas")
    p.add_argument(
        "--sigma-schedule",
        default=None,
        help="start:end:epochs linear decay of sigma",
    )
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument(
        "--batch-size", default="full", help="minibatch size or 'full'"
    )
    p.add_argument("--seeds", default="1", help="comma-separated init/shuffle seeds")
    p.add_argument("--subset", default=None, help="N[:M] first N train / M test records")
    p.add_argument("--mnist-dir", default=None, help="directory with the four IDX files (or MNIST_DIR)")
    _add_common(p)

    p = sub.add_parser("rmsprop", help="RMSProp lookahead experiments")
    p.add_argument("experiment", choices=["parabola-scan", "synth2d"])
    p.add_argument("--eta", type=float, default=0.01, help="learning rate (synth2d)")
    p.add_argument("--eta-list", default="0.01,0.05,0.1", help="learning rates (parabola-scan)")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--g", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--sigma", type=float, default=None, help="single sigma (synth2d)")
    p.add_argument("--sigma-list", default=None, help="comma-separated sigmas (default 0,0.9,2,4)")
    p.add_argument("--sigma-min", type=float, default=0.5)
    p.add_argument("--sigma-max", type=float, default=30.0)
    p.add_argument("--n-grid", type=int, default=24)
    p.add_argument("--start", default="-1,-3.8")
    p.add_argument("--steps", type=int, default=500)
    _add_common(p)

    p = sub.add_parser("plot", help="line plot of CSV columns to SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", required=True, help="x column name")
    p.add_argument("--y", required=True, help="comma-separated y column names")
    p.add_argument("--out", default="plot.svg")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title", default="")
    _add_common(p)

    p = sub.add_parser("rerun", help="re-run an experiment from its sidecar")
    p.add_argument("sidecar", help="path to a sidecar.json")
    _add_common(p)

    return parser


def _params_from_args(args: argparse.Namespace) -> dict:
    cmd = args.command
    if cmd == "parabola":
        return {
            "k_eta": args.k_eta,
            "g": args.g,
            "sigma_list": _sigmas_from(args, "1,9,20"),
            "steps": args.steps,
        }
    if cmd == "sigma-star":
        return {
            "k_eta_list": _parse_sigma_list(args.k_eta_list),
            "g": args.g,
            "sigma_min": args.sigma_min,
            "sigma_max": args.sigma_max,
            "n_grid": args.n_grid,
        }
    if cmd == "synth2d":
        return {
            "eta": args.eta,
            "g": args.g,
            "sigma_list": _sigmas_from(args, "0,0.9,2,4,7"),
            "start": [float(v) for v in args.start.split(",")],
            "steps": args.steps,
        }
    if cmd == "linreg":
        return {
            "eta": args.eta,
            "g": args.g,
            "sigma_list": _sigmas_from(args, "0,1,2,4"),
            "steps": args.steps,
            "seed": args.seed,
            "n_features": args.n_features,
            "n_data": args.n_data,
            "theta0": args.theta0,
        }
    if cmd == "mnist":
        if args.sigma is None and not args.sigma_list and not args.sigma_schedule:
            raise ValueError("mnist needs --sigma/--sigma-list and/or --sigma-schedule")
        subset_train = subset_test = None
        if args.subset:
            parts = args.subset.split(":")
            subset_train = int(parts[0])
            subset_test = int(parts[1]) if len(parts) > 1 else subset_train // 5
        return {
            "arch": args.arch,
            "eta": args.eta,
            "g": args.g,
            "sigma_list": (
                _sigmas_from(args, "")
                if (args.sigma is not None or args.sigma_list)
                else None
            ),
            "schedule": _parse_schedule(args.sigma_schedule) if args.sigma_schedule else None,
            "epochs": args.epochs,
            "batch_size": None if args.batch_size == "full" else int(args.batch_size),
            "seeds": [int(v) for v in args.seeds.split(",")],
            "subset_train": subset_train,
            "subset_test": subset_test,
            "mnist_dir": args.mnist_dir,
        }
    if cmd == "rmsprop":
        params = {
            "experiment": args.experiment,
            "k": args.k,
            "g": args.g,
            "beta2": args.beta2,
            "epsilon": args.epsilon,
        }
        if args.experiment == "parabola-scan":
            params.update(
                {
                    "eta_list": _parse_sigma_list(args.eta_list),
                    "sigma_min": args.sigma_min,
                    "sigma_max": args.sigma_max,
                    "n_grid": args.n_grid,
                }
            )
        else:
            params.update(
                {
                    "eta": args.eta,
                    "sigma_list": _sigmas_from(args, "0,0.9,2,4"),
                    "start": [float(v) for v in args.start.split(",")],
                    "steps": args.steps,
                }
            )
        return params
    if cmd == "plot":
        return {
            "csv": args.csv,
            "x": args.x,
            "y": [v for v in args.y.split(",") if v],
            "out": args.out,
            "logy": args.logy,
            "title": args.title,
        }
    raise ValueError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            sidecar = read_json(args.sidecar)
            command = sidecar["command"]
            params = sidecar["params"]
            if command not in _RUNNERS:
                raise ValueError(f"sidecar names unknown command {command!r}")
        else:
            command = args.command
            params = _params_from_args(args)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _RUNNERS[command](params, out_dir)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
