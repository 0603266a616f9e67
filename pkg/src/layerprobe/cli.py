"""Command-line surface: train / eval / sweep / heatmap / bench (+ helpers).

Run layout, fixed so sweep and heatmap can discover runs:
    <out>/<dataset>/<backend>/<X>layers/seed<k>/
        params.lprobe   trained back-end tensors + agg.raw
        train.log       "epoch <n> train_loss <x> eval_loss <y>" lines
        dev_scores.txt  dev-split detection scores at the best epoch
"""

from __future__ import annotations

import csv
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import click
import numpy as np
import yaml

from .aggregation import LayerWeightVector, softmax_normalize
from .backend import BACKENDS
from .container import read_container, write_container
from .encoder import EncoderConfig, EncoderModel, random_model, save_model
from .metrics import EERResult, compute_eer, mean_eer, write_scores
from .protocol import DatasetSplit, parse_protocol
from .synth import SynthSpec, generate_corpus
from .trainer import (
    TrainConfig,
    load_split_audio,
    score_split,
    train,
)

CACHE_ENV = "LAYERPROBE_CACHE_DIR"


@dataclass
class HeatmapTable:
    rows: list[tuple[str, np.ndarray]]
    average_row: np.ndarray


@dataclass
class RunSetup:
    dataset: str
    backend: str
    model_path: Path
    train_split: DatasetSplit
    dev_split: DatasetSplit
    eval_split: DatasetSplit
    train_config: TrainConfig


def load_config(path) -> RunSetup:
    """Parse and validate the flat key-value config; reports all errors at once."""
    path = Path(path)
    base = path.parent
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a flat key-value mapping")

    errors: list[str] = []

    def resolve(key) -> Path | None:
        value = raw.get(key)
        if value is None:
            errors.append(f"missing required key {key!r}")
            return None
        p = Path(value)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            errors.append(f"{key}: path {p} does not exist")
        return p

    model_path = resolve("model")
    train_proto = resolve("train_protocol")
    dev_proto = resolve("dev_protocol")
    eval_proto = resolve("eval_protocol")
    audio_root = resolve("audio_root")
    dataset = raw.get("dataset")
    if not dataset:
        errors.append("missing required key 'dataset'")
    backend = raw.get("backend", "ffn")
    if backend not in BACKENDS:
        errors.append(f"unknown backend {backend!r} (available: {sorted(BACKENDS)})")

    seeds = raw.get("seeds", list(TrainConfig.seeds))
    if isinstance(seeds, str):
        seeds = [int(s) for s in seeds.split(",") if s.strip()]
    config = TrainConfig(
        lr=float(raw.get("lr", TrainConfig.lr)),
        batch_size=int(raw.get("batch_size", TrainConfig.batch_size)),
        max_epochs=int(raw.get("max_epochs", TrainConfig.max_epochs)),
        patience=int(raw.get("patience", TrainConfig.patience)),
        dropout_p=float(raw.get("dropout_p", TrainConfig.dropout_p)),
        seeds=tuple(int(s) for s in seeds),
        truncate_layers=int(raw.get("truncate_layers", 0) or 0),
        cache_features=bool(raw.get("cache_features", False)),
        segment_len=int(raw.get("segment_len", TrainConfig.segment_len)),
    )

    splits = {}
    if not errors:
        model_container = read_container(model_path)
        num_layers = int(model_container.metadata["num_layers"])
        if config.truncate_layers == 0:
            config = replace(config, truncate_layers=num_layers)
        if config.truncate_layers > num_layers:
            errors.append(
                f"truncate_layers {config.truncate_layers} exceeds encoder layers {num_layers}"
            )
        for name, proto in (("train", train_proto), ("dev", dev_proto), ("eval", eval_proto)):
            try:
                splits[name] = DatasetSplit(parse_protocol(proto, audio_root), name)
            except ValueError as e:
                errors.append(str(e))
    errors.extend(config.validate())
    if errors:
        raise ValueError("invalid config:\n  " + "\n  ".join(errors))

    return RunSetup(
        dataset=str(dataset),
        backend=backend,
        model_path=model_path,
        train_split=splits["train"],
        dev_split=splits["dev"],
        eval_split=splits["eval"],
        train_config=config,
    )


def run_dir_for(out_dir, dataset: str, backend: str, layers: int, seed: int) -> Path:
    return Path(out_dir) / dataset / backend / f"{layers}layers" / f"seed{seed}"


def run_training(setup: RunSetup, out_dir, audio=None) -> list[Path]:
    """Train per seed and persist artifacts; returns the seed run directories."""
    model = EncoderModel.from_container(read_container(setup.model_path))
    config = setup.train_config
    if audio is None:
        audio = {}
        for split in (setup.train_split, setup.dev_split):
            audio.update(load_split_audio(split))
    cache_dir = os.environ.get(CACHE_ENV)
    backend_cls = BACKENDS[setup.backend]

    log_lines: dict[int, list[str]] = {}
    dirs = []
    for seed in config.seeds:
        lines: list[str] = []
        log_lines[seed] = lines
        runs = train(
            replace(config, seeds=(seed,)),
            model,
            setup.train_split,
            setup.dev_split,
            backend_cls=backend_cls,
            audio=audio,
            cache_dir=cache_dir,
            log_fn=lines.append,
        )
        run = runs[0]
        run_dir = run_dir_for(out_dir, setup.dataset, setup.backend, config.truncate_layers, seed)
        run_dir.mkdir(parents=True, exist_ok=True)
        write_container(
            run.final_tensors,
            {
                "dataset": setup.dataset,
                "backend": setup.backend,
                "layers": config.truncate_layers,
                "hidden_dim": model.config.hidden_dim,
                "dropout_p": config.dropout_p,
                "seed": seed,
                "best_epoch": run.best_epoch,
                "encoder_checksum": model.checksum,
            },
            run_dir / "params.lprobe",
        )
        (run_dir / "train.log").write_text("".join(f"{l}\n" for l in lines), encoding="utf-8")
        if run.failed:
            (run_dir / "train.log").open("a", encoding="utf-8").write(f"failed {run.failed}\n")
        backend = backend_cls.from_tensors(run.final_tensors, dropout_p=config.dropout_p)
        weights = LayerWeightVector(run.final_tensors["agg.raw"])
        dev_scores = score_split(
            model, backend, weights, setup.dev_split, config.truncate_layers,
            config.segment_len, audio=audio,
        )
        write_scores(dev_scores, run_dir / "dev_scores.txt")
        dirs.append(run_dir)
    return dirs


def evaluate_artifacts(
    params_path, model_path, split: DatasetSplit, audio=None, backend_name: str = "ffn",
    segment_len: int | None = None,
):
    """Score a split with trained artifacts; returns (ScoreSet, EERResult)."""
    params_container = read_container(params_path)
    model = EncoderModel.from_container(read_container(model_path))
    layers = int(params_container.metadata["layers"])
    if layers > model.config.num_layers:
        raise ValueError(
            f"artifact/model mismatch: artifacts trained with {layers} layers, "
            f"encoder has {model.config.num_layers}"
        )
    raw = np.asarray(params_container.tensors["agg.raw"])
    if raw.shape != (layers,):
        raise ValueError("artifact/config mismatch: agg.raw length differs from layers")
    backend = BACKENDS[backend_name].from_tensors(dict(params_container.tensors))
    weights = LayerWeightVector(raw)
    seg_len = segment_len or TrainConfig.segment_len
    scores = score_split(model, backend, weights, split, layers, seg_len, audio=audio)
    return scores, compute_eer(scores)


def heatmap_table(run_dirs, row_max: bool = False) -> HeatmapTable:
    """Average softmax-normalized layer weights per dataset, plus an AVERAGE row."""
    rows = []
    layer_count = None
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        seed_dirs = sorted(run_dir.glob("seed*/params.lprobe"))
        if not seed_dirs:
            raise ValueError(f"no seed artifacts with agg.raw under {run_dir}")
        per_seed = []
        tag = None
        for params_path in seed_dirs:
            container = read_container(params_path)
            if "agg.raw" not in container.tensors:
                raise ValueError(f"missing agg.raw in {params_path}")
            raw = np.asarray(container.tensors["agg.raw"])
            if layer_count is None:
                layer_count = raw.size
            elif raw.size != layer_count:
                raise ValueError(
                    f"inconsistent layer count across runs: {raw.size} vs {layer_count}"
                )
            per_seed.append(softmax_normalize(raw))
            tag = container.metadata.get("dataset", run_dir.name)
        rows.append((tag, np.mean(per_seed, axis=0)))
    average = np.mean([w for _, w in rows], axis=0)
    if row_max:
        rows = [(t, w / w.max()) for t, w in rows]
        average = average / average.max()
    return HeatmapTable(rows=rows, average_row=average)


def write_heatmap_csv(table: HeatmapTable, path) -> None:
    n = table.average_row.size
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["dataset"] + [f"layer_{l}" for l in range(1, n + 1)])
        for tag, weights in table.rows:
            writer.writerow([tag] + [f"{w:.8f}" for w in weights])
        writer.writerow(["AVERAGE"] + [f"{w:.8f}" for w in table.average_row])


def benchmark_eval(
    model: EncoderModel, backend, weights, split: DatasetSplit, layers: int,
    segment_len: int, audio, reps: int = 5,
) -> tuple[float, int]:
    """Median over reps of mean eval wall time per utterance, plus the
    per-pass transformer-layer invocation count."""
    times = []
    calls = 0
    for _ in range(reps):
        before = model.layer_calls
        t0 = time.perf_counter()
        score_split(model, backend, weights, split, layers, segment_len, audio=audio)
        elapsed = time.perf_counter() - t0
        calls = model.layer_calls - before
        times.append(elapsed / len(split.entries))
    return float(np.median(times)), calls


def run_sweep(setup: RunSetup, layer_list, backend_list, out_dir, reps: int = 5, audio=None):
    """Fresh training per (backend, layers, seed); EER + timing tables."""
    model = EncoderModel.from_container(read_container(setup.model_path))
    L = model.config.num_layers
    for X in layer_list:
        if not 1 <= X <= L:
            raise ValueError(f"layer value {X} out of range 1..{L}")
    for b in backend_list:
        if b not in BACKENDS:
            raise ValueError(f"unknown backend {b!r}")
    if audio is None:
        audio = {}
        for split in (setup.train_split, setup.dev_split, setup.eval_split):
            audio.update(load_split_audio(split))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = []
    timing = []
    report_rows = []
    for backend_name in backend_list:
        for X in layer_list:
            cell_setup = replace(
                setup,
                backend=backend_name,
                train_config=replace(setup.train_config, truncate_layers=X),
            )
            run_dirs = run_training(cell_setup, out_dir, audio=audio)
            per_seed = []
            for seed, run_dir in zip(setup.train_config.seeds, run_dirs):
                scores, eer = evaluate_artifacts(
                    run_dir / "params.lprobe", setup.model_path, setup.eval_split,
                    audio=audio, backend_name=backend_name,
                    segment_len=setup.train_config.segment_len,
                )
                write_scores(scores, run_dir / "eval_scores.txt")
                per_seed.append(eer.eer)
                report_rows.append([setup.dataset, seed, X, backend_name, f"{eer.eer:.6f}"])
            cell_mean = float(np.mean(per_seed))
            cells.append((backend_name, X, setup.dataset, cell_mean, per_seed))

            params = read_container(run_dirs[0] / "params.lprobe")
            backend = BACKENDS[backend_name].from_tensors(dict(params.tensors))
            weights = LayerWeightVector(np.asarray(params.tensors["agg.raw"]))
            wall, calls = benchmark_eval(
                model, backend, weights, setup.eval_split, X,
                setup.train_config.segment_len, audio, reps=reps,
            )
            expected = X * len(setup.eval_split.entries)
            if calls != expected:
                raise RuntimeError(
                    f"layer invocation count {calls} != expected {expected} for X={X}"
                )
            timing.append((X, wall, calls))

    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        n_seeds = len(setup.train_config.seeds)
        writer.writerow(
            ["backend", "layers", "dataset", "mean_eer"]
            + [f"seed_{s}_eer" for s in setup.train_config.seeds[:n_seeds]]
        )
        for backend_name, X, tag, cell_mean, per_seed in cells:
            writer.writerow(
                [backend_name, X, tag, f"{cell_mean:.6f}"] + [f"{e:.6f}" for e in per_seed]
            )
    with open(out_dir / "timing.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["layers", "mean_wall_time_per_utt", "encoder_layer_invocations"])
        for X, wall, calls in timing:
            writer.writerow([X, f"{wall:.6f}", calls])
    with open(out_dir / "eer_report.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["dataset", "seed", "layers", "backend", "eer"])
        writer.writerows(report_rows)
    return cells, timing


@click.group()
def main():
    """Layer-wise probing toolkit for audio deepfake detection."""


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seeds", default=None, help="comma-separated seed override")
def cmd_train(config_path, out_dir, seeds):
    """Train the back-end per seed and write run artifacts."""
    try:
        setup = load_config(config_path)
        if seeds:
            setup = replace(
                setup,
                train_config=replace(
                    setup.train_config, seeds=tuple(int(s) for s in seeds.split(","))
                ),
            )
        dirs = run_training(setup, out_dir)
    except (ValueError, OSError) as e:
        click.echo(str(e), err=True)
        sys.exit(1)
    for d in dirs:
        click.echo(f"wrote {d}")


@main.command("eval")
@click.option("--params", "params_path", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--protocol", required=True, type=click.Path())
@click.option("--audio-root", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_eval(params_path, model_path, protocol, audio_root, out_path):
    """Score a protocol with trained artifacts and print the EER."""
    for p in (params_path, model_path, protocol):
        if not Path(p).exists():
            click.echo(f"missing file: {p}", err=True)
            sys.exit(1)
    try:
        split = DatasetSplit(parse_protocol(protocol, audio_root), "eval")
        scores, eer = evaluate_artifacts(params_path, model_path, split)
    except (ValueError, OSError) as e:
        click.echo(str(e), err=True)
        sys.exit(1)
    write_scores(scores, out_path)
    click.echo(f"eer {eer.eer:.6f} threshold {eer.threshold:.6f}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--layers", required=True, help="comma-separated layer counts, e.g. 2,4,6")
@click.option("--backends", default="ffn", help="comma-separated back-end names")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--reps", default=5, show_default=True)
def cmd_sweep(config_path, layers, backends, out_dir, reps):
    """Truncation sweep: fresh training and eval EER per (backend, layers)."""
    try:
        setup = load_config(config_path)
        layer_list = [int(x) for x in layers.split(",")]
        backend_list = [b.strip() for b in backends.split(",")]
        run_sweep(setup, layer_list, backend_list, out_dir, reps=reps)
    except (ValueError, OSError) as e:
        click.echo(str(e), err=True)
        sys.exit(1)
    click.echo(f"wrote {Path(out_dir) / 'sweep.csv'}")


@main.command("heatmap")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--row-max", is_flag=True, help="additionally divide each row by its max")
def cmd_heatmap(run_dirs, out_path, row_max):
    """Export the layer-weight heatmap table as CSV."""
    try:
        table = heatmap_table(run_dirs, row_max=row_max)
    except (ValueError, OSError) as e:
        click.echo(str(e), err=True)
        sys.exit(1)
    write_heatmap_csv(table, out_path)
    click.echo(f"wrote {out_path}")


@main.command("bench")
@click.option("--params", "params_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--protocol", required=True, type=click.Path(exists=True))
@click.option("--audio-root", required=True, type=click.Path(exists=True))
@click.option("--reps", default=5, show_default=True)
def cmd_bench(params_path, model_path, protocol, audio_root, reps):
    """Measure eval wall time per utterance and layer invocation counts."""
    try:
        params = read_container(params_path)
        model = EncoderModel.from_container(read_container(model_path))
        layers = int(params.metadata["layers"])
        backend = BACKENDS[params.metadata.get("backend", "ffn")].from_tensors(
            dict(params.tensors)
        )
        weights = LayerWeightVector(np.asarray(params.tensors["agg.raw"]))
        split = DatasetSplit(parse_protocol(protocol, audio_root), "eval")
        audio = load_split_audio(split)
        wall, calls = benchmark_eval(
            model, backend, weights, split, layers, TrainConfig.segment_len, audio, reps=reps
        )
    except (ValueError, OSError) as e:
        click.echo(str(e), err=True)
        sys.exit(1)
    click.echo(f"layers {layers} wall_per_utt {wall:.6f}s layer_invocations {calls}")


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n-per-class", default=20, show_default=True)
@click.option("--seed", default=7, show_default=True)
def cmd_synth(out_dir, n_per_class, seed):
    """Generate the synthetic two-class corpus."""
    protocol = generate_corpus(SynthSpec(n_per_class=n_per_class, seed=seed), out_dir)
    click.echo(f"wrote {protocol}")


@main.command("make-encoder")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--layers", default=4, show_default=True)
@click.option("--dim", default=16, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--ffn-dim", default=32, show_default=True)
@click.option("--conv", default="32:10:5,32:8:4,32:8:4,32:8:4,32:4:2", show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_make_encoder(out_path, layers, dim, heads, ffn_dim, conv, seed):
    """Write a random frozen toy encoder container (for desk-scale runs)."""
    from .encoder import parse_conv_stack

    config = EncoderConfig(
        num_layers=layers, hidden_dim=dim, num_heads=heads, ffn_dim=ffn_dim,
        conv_stack=parse_conv_stack(conv),
    )
    model = random_model(config, seed)
    save_model(model, out_path, model_family="toy-random", seed=seed)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
