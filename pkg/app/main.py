"""
Command-line front end for the GNN geolocation pipeline.

Stages are file based: synth -> preprocess -> train -> geolocate / baseline -> evaluate,
plus ablate and grid for model studies. Exit codes: 0 success, 1 data error,
2 usage error, 3 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import yaml

from app.config import AGGREGATORS, BASELINE_METHODS, DECODERS, Settings, reload_settings
from app.utils.exceptions import (
    ConfigurationError, DataError, GeoException, InsufficientDataError, LengthMismatchError,
    exit_code_for,
)
from app.utils.logging import configure_logging, get_logger

logger = get_logger("main")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> Path:
    path.write_bytes((json.dumps(data, indent=2) + "\n").encode("utf-8"))
    return path


def _read_split_ips(path: str) -> Dict[str, List[str]]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed splits file ({e.msg})")
    if not isinstance(data, dict) or not all(k in data for k in ("train", "val", "test")):
        raise DataError(f"{path}: splits file needs train, val and test lists")
    return data


# Commands

def cmd_synth(args, settings: Settings) -> int:
    """Generate a synthetic measurement set."""
    from app.measurement.io import serialize_coordinates, serialize_landmarks, serialize_traceroutes, serialize_truth, write_file
    from app.measurement.synth import synth_network

    settings.apply_overrides("synth", {
        "seed": args.seed,
        "n_landmarks": args.n_landmarks,
        "n_routers": args.n_routers,
        "repetitions": args.repetitions,
        "per_hop_noise_ms": args.noise,
        "rule_violation_fraction": args.rule_violation_fraction,
        "anonymity_prob": args.anonymity_prob,
        "extra_edges": args.extra_edges,
        "attach_radius_km": args.attach_radius,
        "probe_ip": args.probe_ip,
    })
    cfg = settings.synth
    out = _out_dir(args.out)
    records, landmarks, truth = synth_network(cfg)
    write_file(out / "traceroutes.jsonl", serialize_traceroutes(records))
    write_file(out / "landmarks.csv", serialize_landmarks(landmarks))
    write_file(out / "truth.csv", serialize_truth(truth))
    write_file(out / "probe.csv", serialize_coordinates([(cfg.probe_ip, *truth[cfg.probe_ip])]))
    settings.write_effective(out, {"command": "synth"})
    print(f"records={len(records)} landmarks={len(landmarks)}")
    return 0


def cmd_preprocess(args, settings: Settings) -> int:
    """Build the attributed graph bundle from traceroutes and landmarks."""
    from app.graph.builder import build_graph, edges_csv, nodes_csv, save_bundle
    from app.graph.paths import complete_paths, extract_paths
    from app.measurement.io import parse_ip_list, parse_landmarks, parse_traceroutes, read_file, write_file

    settings.apply_overrides("probe", {"ip": args.probe_ip})
    records = read_file(args.traceroutes, parse_traceroutes)
    if not records:
        raise InsufficientDataError(f"{args.traceroutes}: no traceroute records")
    landmarks = read_file(args.landmarks, parse_landmarks)
    targets = set(read_file(args.targets, parse_ip_list)) if args.targets else set()

    probe_ip, probe_location = settings.probe.ip, None
    if args.probe:
        probe_rows = read_file(args.probe, parse_landmarks)
        if len(probe_rows) != 1:
            raise DataError(f"{args.probe}: expected exactly one probing host row")
        probe_ip, probe_location = probe_rows[0].ip, probe_rows[0].coord
        settings.apply_overrides("probe", {"ip": probe_ip})

    completed = complete_paths(extract_paths(records))
    graph = build_graph(completed, landmarks, targets, records, probe_ip,
                        probe_location=probe_location, bin_seed=args.bin_seed)
    out = _out_dir(args.out)
    write_file(out / "nodes.csv", nodes_csv(graph))
    write_file(out / "edges.csv", edges_csv(graph))
    save_bundle(graph, out / "graph.npz")
    settings.write_effective(out, {"command": "preprocess", "bin_seed": args.bin_seed})
    print(f"N_V={graph.n_nodes} N_E={graph.n_edges}")
    return 0


def _apply_model_flags(args, settings: Settings):
    max_epochs, patience = getattr(args, "max_epochs", None), getattr(args, "patience", None)
    if max_epochs is not None and patience is None:
        patience = min(settings.train.patience, max_epochs)
    settings.apply_overrides("model", {
        "node_dim": getattr(args, "G", None),
        "edge_dim": getattr(args, "K", None),
        "num_layers": getattr(args, "L", None),
        "aggregator": getattr(args, "aggregator", None),
        "edge_hidden": getattr(args, "edge_hidden", None),
        "decoder": getattr(args, "decoder", None),
        "seed": getattr(args, "seed", None),
    })
    settings.apply_overrides("train", {
        "lr": getattr(args, "lr", None),
        "weight_decay": getattr(args, "weight_decay", None),
        "max_epochs": max_epochs,
        "patience": patience,
        "seed": getattr(args, "seed", None),
        "rule_based": False if getattr(args, "original", False) else None,
    })
    settings.apply_overrides("split", {"seed": getattr(args, "split_seed", None)})


def _load_splits(args, settings: Settings, landmarks):
    from app.training.split import LandmarkSplits, split

    if getattr(args, "splits", None):
        return LandmarkSplits.read(args.splits, landmarks)
    return split(landmarks, settings.split)


def cmd_train(args, settings: Settings) -> int:
    """Split landmarks, train the model and write checkpoint and report."""
    from app.graph.builder import load_bundle
    from app.measurement.io import parse_landmarks, read_file
    from app.model.checkpoint import save_checkpoint
    from app.training.search import repeated_evaluation
    from app.training.trainer import train, training_labels

    _apply_model_flags(args, settings)
    graph = load_bundle(args.graph)
    landmarks = read_file(args.landmarks, parse_landmarks)
    parts = _load_splits(args, settings, landmarks)
    out = _out_dir(args.out)

    report = train(graph, training_labels(graph, parts.train), {lm.ip: lm.coord for lm in parts.val},
                   settings.train)
    save_checkpoint(report.params, report.scaler, out / "model.npz")
    (out / "report.json").write_bytes(report.to_json())
    (out / "splits.json").write_bytes(parts.to_json())
    if args.repeats:
        result = repeated_evaluation(graph, landmarks, settings.train, settings.split, repeats=args.repeats)
        (out / "repeats.json").write_bytes(result.to_json())
    settings.write_effective(out, {"command": "train", "repeats": args.repeats})
    print(f"best_epoch={report.best_epoch} best_val_error_km={report.best_val_error_km!r} "
          f"stop_reason={report.stop_reason}")
    return 0


def _requested_targets(args, graph) -> List[str]:
    from app.graph.builder import NodeRole
    from app.measurement.io import parse_ip_list, read_file

    if getattr(args, "all_nodes", False):
        return [node.ip for node in graph.nodes]
    if args.targets:
        return read_file(args.targets, parse_ip_list)
    if args.splits:
        return list(_read_split_ips(args.splits)["test"])
    targets = [graph.nodes[i].ip for i in graph.ids_with_role(NodeRole.TARGET)]
    if not targets:
        raise ConfigurationError("no targets: pass --targets, --splits or --all-nodes")
    return targets


def cmd_geolocate(args, settings: Settings) -> int:
    """Predict coordinates for targets with a trained checkpoint."""
    from app.graph.builder import load_bundle
    from app.measurement.io import serialize_predictions, write_file
    from app.model.checkpoint import load_checkpoint
    from app.training.trainer import predict_coordinates
    from app.utils.exceptions import UnknownNodeError

    graph = load_bundle(args.graph)
    params, scaler = load_checkpoint(args.checkpoint)
    if params.n_nodes != graph.n_nodes:
        raise DataError(f"checkpoint was trained on {params.n_nodes} nodes, graph has {graph.n_nodes}")
    targets = _requested_targets(args, graph)
    missing = [ip for ip in targets if ip not in graph]
    if missing:
        raise UnknownNodeError(f"targets not in graph: {', '.join(missing)}", {"ips": missing})
    predictions = predict_coordinates(graph, params, scaler, targets)
    out = _out_dir(args.out)
    write_file(out / "predictions.csv", serialize_predictions(predictions))
    settings.write_effective(out, {"command": "geolocate", "targets": len(targets)})
    return 0


def cmd_baseline(args, settings: Settings) -> int:
    """Run SLG, Corr-SLG or MLP-Geo on the same graph and splits."""
    from app.baselines.mlp_geo import mlp_geo_predict, mlp_geo_train, tune_mlp_geo
    from app.baselines.paths import PathIndex
    from app.baselines.slg import corr_slg_geolocate, slg_geolocate, tune_corr_slg
    from app.graph.builder import load_bundle
    from app.measurement.io import parse_landmarks, read_file, serialize_predictions, write_file

    settings.apply_overrides("baseline", {
        "method": args.method, "ca": args.ca, "cb": args.cb, "beta": args.beta,
        "mlp_hidden": args.hidden, "mlp_lr": args.lr, "mlp_epochs": args.epochs,
        "tune": True if args.tune else None, "seed": args.seed,
    })
    cfg = settings.baseline
    if cfg.method == "corr-slg" and not cfg.tune and (cfg.ca is None or cfg.cb is None):
        raise ConfigurationError("corr-slg needs --ca and --cb (or --tune)")

    graph = load_bundle(args.graph)
    landmarks = read_file(args.landmarks, parse_landmarks)
    parts = _load_splits(args, settings, landmarks)
    targets = _requested_targets(args, graph)
    index = PathIndex.from_graph(graph)
    reference = list(parts.train) + list(parts.val)
    chosen: Dict[str, object] = {"method": cfg.method}

    if cfg.method == "slg":
        predictions = {t: slg_geolocate(t, reference, index) for t in targets}
    elif cfg.method == "corr-slg":
        ca, cb = cfg.ca, cfg.cb
        if cfg.tune:
            ca, cb, val_error = tune_corr_slg(parts.train, parts.val, index)
            chosen["val_error_km"] = val_error
        chosen.update(ca=ca, cb=cb)
        predictions = corr_slg_geolocate(targets, reference, index, ca, cb)
    else:
        train_labels = {lm.ip: lm.coord for lm in parts.train}
        val_labels = {lm.ip: lm.coord for lm in parts.val}
        if cfg.tune:
            model = tune_mlp_geo(index, train_labels, val_labels, cfg)
        else:
            model = mlp_geo_train(index, train_labels, cfg, val_labels)
        chosen.update(lr=model.lr, hidden=model.hidden, beta=model.beta, best_epoch=model.best_epoch)
        predictions = mlp_geo_predict(model, targets, index)

    out = _out_dir(args.out)
    write_file(out / "predictions.csv", serialize_predictions(predictions))
    _write_json(out / "baseline.json", chosen)
    settings.write_effective(out, {"command": "baseline"})
    return 0


def cmd_evaluate(args, settings: Settings) -> int:
    """Join predictions with ground truth and write metrics and CDF."""
    from app.evaluation.metrics import cdf, error_distances, summarize_errors
    from app.measurement.io import parse_predictions, parse_truth, read_file, write_file

    predictions = read_file(args.predictions, parse_predictions)
    truth = read_file(args.truth, parse_truth)
    missing = [ip for ip in predictions if ip not in truth]
    if missing:
        raise LengthMismatchError(f"ips missing from truth: {', '.join(missing)}", {"ips": missing})
    if not predictions:
        raise InsufficientDataError(f"{args.predictions}: no predictions")
    errors = error_distances(list(predictions.values()), [truth[ip] for ip in predictions])
    out = _out_dir(args.out)
    write_file(out / "metrics.json", summarize_errors(errors).to_json())
    write_file(out / "cdf.csv", cdf(errors).to_csv())
    settings.write_effective(out, {"command": "evaluate"})
    return 0


def cmd_ablate(args, settings: Settings) -> int:
    """Train every decoder variant and write the comparison."""
    from dataclasses import asdict

    from app.graph.builder import load_bundle
    from app.measurement.io import parse_landmarks, read_file
    from app.training.search import decoder_ablation
    from app.training.trainer import training_labels

    _apply_model_flags(args, settings)
    graph = load_bundle(args.graph)
    landmarks = read_file(args.landmarks, parse_landmarks)
    parts = _load_splits(args, settings, landmarks)
    rows = decoder_ablation(graph, training_labels(graph, parts.train), {lm.ip: lm.coord for lm in parts.val},
                            settings.train, max_epochs=args.ablation_epochs, patience=args.ablation_patience,
                            variants=args.variants)
    out = _out_dir(args.out)
    _write_json(out / "ablation.json", [asdict(r) for r in rows])
    settings.write_effective(out, {"command": "ablate", "max_epochs": args.ablation_epochs,
                                   "patience": args.ablation_patience})
    return 0


def cmd_grid(args, settings: Settings) -> int:
    """Grid search over model and training hyperparameters."""
    from app.graph.builder import load_bundle
    from app.measurement.io import parse_landmarks, read_file
    from app.training.search import grid_search
    from app.training.trainer import training_labels

    try:
        grid = yaml.safe_load(Path(args.grid).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigurationError(f"failed to parse grid file {args.grid}: {e}")
    if not isinstance(grid, dict):
        raise ConfigurationError(f"{args.grid} must map hyperparameter names to value lists")
    grid = {k: v if isinstance(v, list) else [v] for k, v in grid.items()}

    _apply_model_flags(args, settings)
    graph = load_bundle(args.graph)
    landmarks = read_file(args.landmarks, parse_landmarks)
    parts = _load_splits(args, settings, landmarks)
    result = grid_search(graph, training_labels(graph, parts.train), {lm.ip: lm.coord for lm in parts.val},
                         settings.train, grid, workers=args.workers)
    out = _out_dir(args.out)
    _write_json(out / "grid.json", result.to_dict())
    settings.write_effective(out, {"command": "grid", "grid": grid, "workers": args.workers})
    return 0


# Parser

def _add_common(parser: argparse.ArgumentParser, out_required: bool = True):
    parser.add_argument("-o", "--out", required=out_required, help="Output directory")
    parser.add_argument("--config", help="Config file (YAML or section.key=value)")
    parser.add_argument("--log-level", help="Log level (overrides LOG_LEVEL)")
    parser.add_argument("--log-format", choices=["json", "text"], help="Log format")


def _add_model_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--G", type=int, dest="G", help="Node embedding size")
    parser.add_argument("--K", type=int, dest="K", help="Edge embedding size")
    parser.add_argument("--L", type=int, dest="L", help="Message-passing layers")
    parser.add_argument("--aggregator", choices=AGGREGATORS)
    parser.add_argument("--edge-hidden", type=int, help="Edge-network hidden width (default 2K)")
    parser.add_argument("--decoder", choices=DECODERS)
    parser.add_argument("--lr", type=float, help="Learning rate")
    parser.add_argument("--lambda", type=float, dest="weight_decay", help="L2 coefficient")
    parser.add_argument("--max-epochs", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--original", action="store_true", help="Train on raw degrees (no range rule)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--split-seed", type=int)


def _add_dataset_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--graph", required=True, help="Graph bundle from preprocess")
    parser.add_argument("--landmarks", required=True, help="Landmark CSV")
    parser.add_argument("--splits", help="splits.json from train (default: split here)")


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subcommand per pipeline stage."""
    parser = argparse.ArgumentParser(prog="gnn-geo", description="Measurement-based IP geolocation with a GNN")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic measurement set")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-landmarks", type=int)
    p.add_argument("--n-routers", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--noise", type=float, help="Per-hop noise std (ms)")
    p.add_argument("--rule-violation-fraction", type=float)
    p.add_argument("--anonymity-prob", type=float)
    p.add_argument("--extra-edges", type=int)
    p.add_argument("--attach-radius", type=float, help="Max landmark distance from its access router (km)")
    p.add_argument("--probe-ip")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("preprocess", help="Build the attributed graph")
    _add_common(p)
    p.add_argument("--traceroutes", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--targets", help="Target ip list")
    p.add_argument("--probe", help="Probing host CSV (ip,lat,lon)")
    p.add_argument("--probe-ip")
    p.add_argument("--bin-seed", type=int, default=0)
    p.set_defaults(handler=cmd_preprocess)

    p = sub.add_parser("train", help="Train the model")
    _add_common(p)
    _add_dataset_flags(p)
    _add_model_flags(p)
    p.add_argument("--repeats", type=int, default=0, help="Additional re-split runs averaged into repeats.json")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("geolocate", help="Predict target locations")
    _add_common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--targets", help="Target ip list")
    p.add_argument("--splits", help="Use the test split of this splits.json as targets")
    p.add_argument("--all-nodes", action="store_true", help="Predict every node, routers included")
    p.set_defaults(handler=cmd_geolocate)

    p = sub.add_parser("baseline", help="Run a baseline method")
    _add_common(p)
    _add_dataset_flags(p)
    p.add_argument("--method", choices=BASELINE_METHODS)
    p.add_argument("--targets", help="Target ip list (default: test split)")
    p.add_argument("--ca", type=float)
    p.add_argument("--cb", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--tune", action="store_true", help="Tune hyperparameters on the validation split")
    p.add_argument("--seed", type=int)
    p.add_argument("--split-seed", type=int)
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("evaluate", help="Compute error metrics and CDF")
    _add_common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="Compare decoder variants")
    _add_common(p)
    _add_dataset_flags(p)
    _add_model_flags(p)
    p.add_argument("--ablation-epochs", type=int, default=10000)
    p.add_argument("--ablation-patience", type=int, default=1000)
    p.add_argument("--variants", nargs="+")
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("grid", help="Grid search")
    _add_common(p)
    _add_dataset_flags(p)
    _add_model_flags(p)
    p.add_argument("--grid", required=True, help="YAML file mapping hyperparameters to value lists")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_grid)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = reload_settings(args.config)
        configure_logging(level=args.log_level, fmt=args.log_format)
        if args.log_level or args.log_format:
            settings.apply_overrides("logging", {"level": args.log_level, "format": args.log_format})
        return args.handler(args, settings)
    except GeoException as e:
        logger.error("Command failed", command=args.command, error=e.message, error_type=type(e).__name__)
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
