"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 data/processing error (machine-readable JSON on
stderr), 2 usage error. A JSON config file can prefill any flag value;
explicit flags win. The service port can also come from NOVEMO_PORT.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path


from .errors import InvalidConfig, NovemoError

RUN_CONFIG_KEYS = {
    "dataset", "train", "probe", "bundle", "buffer", "out", "port",
    "seed", "face_provider", "posture_provider", "ensemble_size",
    "input_side", "cnn_epochs", "mlp_epochs", "optimizer", "learning_rate",
    "mini_batch_size", "z_mult", "context_k", "min_pending", "theta_new",
    "k_max", "retrain_epochs", "auto_oracle", "annotations", "new_class_name",
    "modality", "repeat", "ui", "scenario",
}

REFERENCE_COST_RATIO = 1.5   # externally reported posture/face cost proportion


def load_run_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise InvalidConfig("config file must hold a JSON object")
    unknown = set(cfg) - RUN_CONFIG_KEYS
    if unknown:
        raise InvalidConfig(f"unknown config key(s): {sorted(unknown)}")
    return cfg


class Options:
    """Flag values backed by the optional config file."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.cfg = load_run_config(self.args.get("config"))

    def get(self, name: str, default=None):
        value = self.args.get(name)
        if value is not None:
            return value
        if name in self.cfg:
            return self.cfg[name]
        return default

    def require(self, name: str):
        value = self.get(name)
        if value is None:
            raise InvalidConfig(f"missing required option --{name.replace('_', '-')}")
        return value


def _load_samples(directory):
    from .data_io import load_dataset
    samples, manifest = load_dataset(directory)
    return samples, manifest


def _mlp_train_config(opt: Options):
    from .nn import TrainingConfig
    return TrainingConfig(
        epochs=int(opt.get("mlp_epochs", 150)),
        mini_batch_size=int(opt.get("mini_batch_size", 32)),
        optimizer=opt.get("optimizer", "adam"),
        learning_rate=opt.get("learning_rate", 0.003))


def cmd_gen_synth(opt: Options) -> int:
    from .data_io import save_dataset
    from .synth import SyntheticScenarioConfig, synth_generate

    out = Path(opt.require("out"))
    scenario_path = opt.get("scenario")
    fields = json.loads(Path(scenario_path).read_text()) if scenario_path else {}
    if opt.get("seed") is not None:
        fields["seed"] = int(opt.get("seed"))
    try:
        config = SyntheticScenarioConfig(**fields)
    except TypeError as exc:
        raise InvalidConfig(f"bad scenario field: {exc}") from exc
    data = synth_generate(config)
    save_dataset(data.train, out / "train", classes=data.class_names)
    save_dataset(data.probe, out / "probe", classes=data.class_names)
    (out / "annotations.json").write_text(json.dumps(data.annotations, indent=2, sort_keys=True))
    (out / "scenario.json").write_text(json.dumps(
        {**fields, "class_names": list(data.class_names),
         "unseen_class_index": data.unseen_class_index}, indent=2, sort_keys=True))
    print(json.dumps({"train": len(data.train), "probe": len(data.probe),
                      "annotated": len(data.annotations), "out": str(out)}))
    return 0


def cmd_extract_features(opt: Options) -> int:
    from .pipeline import visible_features

    samples, _ = _load_samples(opt.require("dataset"))
    modality = opt.get("modality", "face")
    out_path = opt.get("out")
    lines = []
    for s in samples:
        feats = visible_features(s, modality)
        lines.append(json.dumps({"id": s.id, "features": [float(v) for v in feats]}))
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(opt: Options) -> int:
    from .data_io import save_bundle
    from .nn import TrainingConfig
    from .pipeline import BundleConfig, ProviderConfig, train_bundle

    samples, manifest = _load_samples(opt.require("train"))
    classes = manifest.get("classes")
    if not classes:
        raise InvalidConfig("dataset manifest carries no class registry snapshot")
    provider_kind = opt.get("face_provider", "ensemble_cnn")
    cnn_train = TrainingConfig(
        epochs=int(opt.get("cnn_epochs", 6)),
        mini_batch_size=int(opt.get("mini_batch_size", 32)),
        optimizer=opt.get("optimizer", "adam"))
    config = BundleConfig(
        classes=tuple(classes),
        face_provider=ProviderConfig(
            kind=provider_kind,
            ensemble_size=int(opt.get("ensemble_size", 3)),
            input_side=int(opt.get("input_side", samples[0].image.shape[0]
                                   if samples[0].image is not None else 32)),
            train=cnn_train),
        posture_provider=ProviderConfig(kind=opt.get("posture_provider", "none"),
                                        train=cnn_train),
        mlp_train=_mlp_train_config(opt),
        context_k=int(opt.get("context_k", 3)),
        context_z_mult=float(opt.get("z_mult", 3.0)),
        seed=int(opt.get("seed", 0)))
    bundle = train_bundle(samples, config)
    out = opt.require("out")
    save_bundle(bundle, out)
    print(json.dumps({"bundle": str(out), "classes": list(classes),
                      "samples": len(samples)}))
    return 0


def render_confusion(report) -> str:
    names = list(report.class_names)
    width = max(9, max(len(n) for n in names) + 2)
    lines = ["true \\ predicted".ljust(18)
             + "".join(n[:width - 1].rjust(width) for n in names)]
    for i, name in enumerate(names):
        row = name[:17].ljust(18)
        row += "".join(f"{v:.3f}".rjust(width) for v in report.confusion[i])
        lines.append(row)
    return "\n".join(lines)


def cmd_evaluate(opt: Options) -> int:
    from .data_io import load_bundle
    from .pipeline import evaluate

    samples, _ = _load_samples(opt.require("dataset"))
    bundle = load_bundle(opt.require("bundle"))
    modality = opt.get("modality", "face")
    labeled = [s for s in samples if s.label is not None]
    report = evaluate(labeled, bundle, modality)
    print(json.dumps(report.to_json_dict()))
    print(render_confusion(report))
    return 0


def cmd_infer(opt: Options) -> int:
    from .data_io import load_bundle
    from .pipeline import classify, predicted_label

    samples, _ = _load_samples(opt.require("dataset"))
    bundle = load_bundle(opt.require("bundle"))
    modality = opt.get("modality", "face")
    wanted = opt.get("ids")
    if wanted:
        wanted = set(wanted.split(","))
        samples = [s for s in samples if s.id in wanted]
    for s in samples:
        probs = classify(s, modality, bundle)
        label = predicted_label(probs)
        print(json.dumps({"id": s.id, "predicted": label,
                          "name": bundle.registry.name_of(label),
                          "probs": [float(p) for p in probs]}))
    return 0


def cmd_detect(opt: Options) -> int:
    from .data_io import load_bundle
    from .novelty import NoveltyBuffer, detect_and_buffer

    samples, _ = _load_samples(opt.require("dataset"))
    bundle = load_bundle(opt.require("bundle"))
    buffer = NoveltyBuffer(path=opt.require("buffer"))
    flagged = 0
    for s in samples:
        if s.id in buffer:
            continue
        verdict = detect_and_buffer(s, bundle, buffer)
        flagged += verdict.flagged
        print(json.dumps(verdict.to_json_dict()))
    print(json.dumps({"processed": len(samples), "flagged_now_pending": buffer.pending_count(),
                      "flagged": flagged}), file=sys.stderr)
    return 0


def cmd_retrain(opt: Options) -> int:
    from .continual import (RetrainConfig, auto_oracle_resolve, cluster_novelties,
                            retrain)
    from .data_io import load_bundle, save_bundle
    from .novelty import NoveltyBuffer

    train_samples, _ = _load_samples(opt.require("train"))
    probe_samples, _ = _load_samples(opt.require("probe"))
    bundle = load_bundle(opt.require("bundle"))
    buffer = NoveltyBuffer(path=opt.require("buffer"))
    seed = int(opt.get("seed", 0))

    if opt.get("auto_oracle"):
        annotations_path = opt.require("annotations")
        annotations = json.loads(Path(annotations_path).read_text())
        proposals, _ = cluster_novelties(
            buffer, k_max=int(opt.get("k_max", 5)),
            theta_new=int(opt.get("theta_new", 10)), seed=seed)
        auto_oracle_resolve(bundle, buffer, proposals, annotations,
                            new_class_name=opt.get("new_class_name", "contempt"))
    config = RetrainConfig(epochs=int(opt.get("retrain_epochs", 30)),
                           mlp_train=_mlp_train_config(opt), seed=seed)
    bundle, report = retrain(bundle, train_samples, probe_samples, buffer, config)
    out = opt.get("out", opt.require("bundle"))
    save_bundle(bundle, out)
    print(json.dumps(report.to_json_dict()))
    return 0


def cmd_bench(opt: Options) -> int:
    from .data_io import load_bundle
    from .pipeline import classify

    samples, _ = _load_samples(opt.require("dataset"))
    bundle = load_bundle(opt.require("bundle"))
    repeat = int(opt.get("repeat", 3))
    # warmup
    for s in samples[:5]:
        classify(s, "face", bundle)
        classify(s, "posture", bundle)

    start = time.perf_counter()
    for _ in range(repeat):
        for s in samples:
            classify(s, "face", bundle)
    face_seconds = time.perf_counter() - start

    start = time.perf_counter()
    for _ in range(repeat):
        for s in samples:
            classify(s, "face", bundle)
            classify(s, "posture", bundle)
    both_seconds = time.perf_counter() - start

    n = repeat * len(samples)
    result = {
        "samples": len(samples),
        "repeats": repeat,
        "face_ms_per_sample": face_seconds / n * 1000,
        "face_posture_ms_per_sample": both_seconds / n * 1000,
        "ratio": both_seconds / face_seconds,
        "reference_ratio": REFERENCE_COST_RATIO,
    }
    print(json.dumps(result))
    return 0


def cmd_serve(opt: Options) -> int:
    from .continual import RetrainConfig
    from .data_io import load_bundle
    from .novelty import NoveltyBuffer
    from .service import ServiceState, serve

    bundle = load_bundle(opt.require("bundle"))
    buffer = NoveltyBuffer(path=opt.require("buffer"))
    train_samples = probe_samples = []
    if opt.get("train"):
        train_samples, _ = _load_samples(opt.get("train"))
    if opt.get("probe"):
        probe_samples, _ = _load_samples(opt.get("probe"))
    port = int(opt.get("port") or os.environ.get("NOVEMO_PORT") or 8765)
    state = ServiceState(
        bundle=bundle, buffer=buffer,
        train_set=train_samples, probe_set=probe_samples,
        retrain_config=RetrainConfig(epochs=int(opt.get("retrain_epochs", 30)),
                                     mlp_train=_mlp_train_config(opt),
                                     seed=int(opt.get("seed", 0))),
        min_pending=int(opt.get("min_pending", 50)),
        k_max=int(opt.get("k_max", 5)),
        theta_new=int(opt.get("theta_new", 10)),
        cluster_seed=int(opt.get("seed", 0)))
    for entry in buffer.entries():
        state.emit("verdict", {"id": entry.sample.id, "status": entry.status,
                               "verdict": entry.verdict.to_json_dict()})
    ui = opt.get("ui")
    ui_dir = Path(ui) if ui else None
    if ui_dir is not None and not ui_dir.is_dir():
        raise InvalidConfig(f"ui directory {ui_dir} does not exist")
    serve(state, port=port, ui_dir=ui_dir)
    return 0


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "extract-features": cmd_extract_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "infer": cmd_infer,
    "detect": cmd_detect,
    "retrain": cmd_retrain,
    "bench": cmd_bench,
    "serve": cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="novemo",
                                     description="novelty-aware emotion recognition pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, *flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run-config file")
        for flag, kw in flags:
            p.add_argument(flag, **kw)
        return p

    path = {"type": str}
    add("gen-synth", ("--out", path), ("--scenario", path), ("--seed", {"type": int}))
    add("extract-features", ("--dataset", path), ("--modality", path), ("--out", path))
    add("train", ("--train", path), ("--out", path), ("--seed", {"type": int}),
        ("--face-provider", {"type": str, "dest": "face_provider"}),
        ("--posture-provider", {"type": str, "dest": "posture_provider"}),
        ("--ensemble-size", {"type": int, "dest": "ensemble_size"}),
        ("--input-side", {"type": int, "dest": "input_side"}),
        ("--cnn-epochs", {"type": int, "dest": "cnn_epochs"}),
        ("--mlp-epochs", {"type": int, "dest": "mlp_epochs"}),
        ("--optimizer", path), ("--learning-rate", {"type": float, "dest": "learning_rate"}),
        ("--mini-batch-size", {"type": int, "dest": "mini_batch_size"}),
        ("--context-k", {"type": int, "dest": "context_k"}),
        ("--z-mult", {"type": float, "dest": "z_mult"}))
    add("evaluate", ("--dataset", path), ("--bundle", path), ("--modality", path))
    add("infer", ("--dataset", path), ("--bundle", path), ("--modality", path),
        ("--ids", path))
    add("detect", ("--dataset", path), ("--bundle", path), ("--buffer", path))
    add("retrain", ("--train", path), ("--probe", path), ("--bundle", path),
        ("--buffer", path), ("--out", path), ("--seed", {"type": int}),
        ("--auto-oracle", {"action": "store_true", "dest": "auto_oracle", "default": None}),
        ("--annotations", path),
        ("--new-class-name", {"type": str, "dest": "new_class_name"}),
        ("--retrain-epochs", {"type": int, "dest": "retrain_epochs"}),
        ("--mlp-epochs", {"type": int, "dest": "mlp_epochs"}),
        ("--mini-batch-size", {"type": int, "dest": "mini_batch_size"}),
        ("--optimizer", path), ("--learning-rate", {"type": float, "dest": "learning_rate"}),
        ("--theta-new", {"type": int, "dest": "theta_new"}),
        ("--k-max", {"type": int, "dest": "k_max"}))
    add("bench", ("--dataset", path), ("--bundle", path), ("--repeat", {"type": int}))
    add("serve", ("--bundle", path), ("--buffer", path), ("--train", path),
        ("--probe", path), ("--port", {"type": int}), ("--ui", path),
        ("--seed", {"type": int}),
        ("--min-pending", {"type": int, "dest": "min_pending"}),
        ("--theta-new", {"type": int, "dest": "theta_new"}),
        ("--retrain-epochs", {"type": int, "dest": "retrain_epochs"}),
        ("--mlp-epochs", {"type": int, "dest": "mlp_epochs"}))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](Options(args))
    except NovemoError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFound", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
