"""Command-line pipeline runner.

One JSON config describes a run: dataset paths, mechanism, track, seeds,
training and evaluation settings. Each subcommand executes one stage into a
run directory; ``pipeline`` chains them. Stages fingerprint their config
slice and input artifacts, skip themselves when nothing changed, and refuse
to overwrite mismatched state without --force. Exit codes: 0 success,
2 config error, 3 missing prerequisite artifact, 4 stage failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .backends import FineTuneConfig, load_backend, load_trained
from .corpus import (
    DatasetSplit,
    TextRecord,
    build_reverse_pairs,
    load_aligned,
    load_jsonl,
    load_reverse_pairs,
    sample_public_corpus,
    save_aligned,
    save_jsonl,
    save_reverse_pairs,
    split_dataset,
)
from .dp_core import ClipRange, NoiseSpec
from .errors import (
    ConfigurationError,
    MissingArtifactError,
    RewriteAgainError,
)
from .evaluation import (
    ClassifierConfig,
    PrivacyReport,
    cs_score,
    load_encoder,
    run_empirical_privacy,
)
from .mechanisms import (
    DP_BART_CLV,
    DP_PROMPT,
    DPBartConfig,
    DPPromptConfig,
    build_mechanism,
    rewrite_corpus,
)
from .realign import (
    ReleaseRecord,
    Track,
    load_release,
    rerewrite,
    results_from_pairs,
    save_release,
    train_T,
    train_Tpp,
)
from .reports import render_report_csv, render_report_text, save_reports

ENV_RUN_DIR = "REWRITE_AGAIN_RUN_DIR"

STAGE_NAMES = (
    "sample-corpus",
    "rewrite",
    "build-pairs",
    "finetune",
    "rerewrite",
    "attack",
    "similarity",
    "report",
)

_DEFAULTS = {
    "run_dir": None,
    "track": "basic",
    "dataset": {
        "private_path": None,
        "public_path": None,
        "attribute": None,
        "num_classes": None,
        "public_sample_size": None,
        "split_ratio": 0.9,
        "split_seed": 42,
    },
    "mechanism": {
        "name": None,
        "backend_spec": "toy",
        "backend_options": {},
        "temperature": 1.5,
        "clip": [-95.0, 8.0],
        "prompt_template": None,
        "max_new_tokens": 256,
        "epsilon": None,
        "clip_value": None,
        "noise": "auto",
    },
    "training": {
        "base_spec": "toy",
        "epochs": 1,
        "learning_rate": 5e-5,
        "max_source_length": 128,
        "max_target_length": 128,
    },
    "evaluation": {
        "n_runs": 3,
        "averaging": "weighted",
        "classifier_spec": "toy",
        "encoder_specs": ["hashed-bag:64:alpha", "hashed-bag:64:beta"],
        "run_seeds": None,
    },
    "seeds": {"corpus": 0, "mechanism": 1, "training": 2, "attack": 3},
}


def _merge_section(defaults: dict, user: dict, path: str) -> dict:
    out = dict(defaults)
    for key, value in user.items():
        if key.startswith("_"):
            continue  # underscore keys are in-file documentation
        if key not in defaults:
            raise ConfigurationError(f"unknown config key {path}{key!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict) and key != "backend_options":
            out[key] = _merge_section(defaults[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def load_config(path: Path) -> dict:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc.msg}")
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a JSON object")
    cfg = _merge_section(_DEFAULTS, raw, "")
    cfg["_config_dir"] = str(path.resolve().parent)
    return cfg


def resolve_data_path(value: str, config_dir: str) -> Path:
    """Resolve a config path; "pkgdata:<rel>" points into the bundled data."""
    if value.startswith("pkgdata:"):
        root = resources.files("rewrite_again") / "data"
        return Path(str(root / value.split(":", 1)[1]))
    p = Path(value)
    return p if p.is_absolute() else Path(config_dir) / p


def validate_config(cfg: dict) -> None:
    ds = cfg["dataset"]
    for key in ("private_path", "public_path", "attribute", "num_classes", "public_sample_size"):
        if ds[key] is None:
            raise ConfigurationError(f"dataset.{key} is required")
    mech = cfg["mechanism"]
    if mech["name"] not in (DP_PROMPT, DP_BART_CLV):
        raise ConfigurationError(
            f"mechanism.name must be {DP_PROMPT!r} or {DP_BART_CLV!r}, got {mech['name']!r}"
        )
    if mech["name"] == DP_BART_CLV and (mech["epsilon"] is None or mech["clip_value"] is None):
        raise ConfigurationError(f"{DP_BART_CLV} requires mechanism.epsilon and mechanism.clip_value")
    try:
        Track(cfg["track"])
    except ValueError:
        raise ConfigurationError(f"track must be 'basic' or 'advanced', got {cfg['track']!r}")
    ev = cfg["evaluation"]
    if ev["run_seeds"] is not None and len(ev["run_seeds"]) != ev["n_runs"]:
        raise ConfigurationError("evaluation.run_seeds must match evaluation.n_runs")
    if len(ev["encoder_specs"]) != 2:
        raise ConfigurationError("evaluation.encoder_specs must name exactly two encoders")


def mechanism_config(cfg: dict):
    mech = cfg["mechanism"]
    if mech["name"] == DP_PROMPT:
        kwargs = {
            "backend_spec": mech["backend_spec"],
            "clip": ClipRange(*mech["clip"]),
            "temperature": mech["temperature"],
            "max_new_tokens": mech["max_new_tokens"],
        }
        if mech["prompt_template"] is not None:
            kwargs["prompt_template"] = mech["prompt_template"]
        return DPPromptConfig(**kwargs)
    noise = mech["noise"]
    if isinstance(noise, dict):
        noise = NoiseSpec(**noise)
    return DPBartConfig(
        epsilon=mech["epsilon"],
        clip_value=mech["clip_value"],
        backend_spec=mech["backend_spec"],
        noise=noise,
    )


def build_run_mechanism(cfg: dict):
    mech_cfg = mechanism_config(cfg)
    backend = load_backend(cfg["mechanism"]["backend_spec"], cfg["mechanism"]["backend_options"])
    return build_mechanism(cfg["mechanism"]["name"], mech_cfg, backend=backend)


# -- run directory layout ------------------------------------------------------


@dataclass
class RunContext:
    cfg: dict
    run_dir: Path
    force: bool = False
    manifest: dict = field(default_factory=dict)

    @property
    def artifacts(self) -> Path:
        return self.run_dir / "artifacts"

    def path(self, name: str) -> Path:
        return self.artifacts / name

    @property
    def track(self) -> Track:
        return Track(self.cfg["track"])

    @property
    def second_stage(self) -> str:
        return "basic2x" if self.track is Track.BASIC else "advanced2x"


ARTIFACTS = {
    "public_sample.jsonl": "sample-corpus",
    "private_train.jsonl": "sample-corpus",
    "private_validation.jsonl": "sample-corpus",
    "aligned_public.jsonl": "rewrite",
    "aligned_train.jsonl": "rewrite",
    "aligned_validation.jsonl": "rewrite",
    "reverse_pairs_public.jsonl": "build-pairs",
    "reverse_pairs_train.jsonl": "build-pairs",
    "models.json": "finetune",
    "release.jsonl": "rerewrite",
    "attack_reports.json": "attack",
    "similarity.json": "similarity",
}

MANIFEST_NAME = "manifest.json"


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / MANIFEST_NAME
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"config": None, "stages": {}, "events": []}


def _save_manifest(ctx: RunContext) -> None:
    path = ctx.run_dir / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    snapshot = {k: v for k, v in ctx.cfg.items() if not k.startswith("_")}
    ctx.manifest["config"] = snapshot
    path.write_text(
        json.dumps(ctx.manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fingerprint(config_slice: dict, input_paths: list[Path]) -> str:
    payload = {
        "config": config_slice,
        "inputs": {p.name: _sha256_file(p) for p in sorted(input_paths)},
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


# -- stage bodies ----------------------------------------------------------------


def _stage_sample_corpus(ctx: RunContext) -> dict:
    ds = ctx.cfg["dataset"]
    cfg_dir = ctx.cfg["_config_dir"]
    public = load_jsonl(resolve_data_path(ds["public_path"], cfg_dir))
    sample = sample_public_corpus(public, ds["public_sample_size"], ctx.cfg["seeds"]["corpus"])
    save_jsonl(sample, ctx.path("public_sample.jsonl"))
    private = load_jsonl(resolve_data_path(ds["private_path"], cfg_dir))
    split = split_dataset(private, ratio=ds["split_ratio"], seed=ds["split_seed"])
    save_jsonl(split.train, ctx.path("private_train.jsonl"))
    save_jsonl(split.validation, ctx.path("private_validation.jsonl"))
    return {"public_sampled": len(sample), "train": len(split.train), "validation": len(split.validation)}


def _stage_rewrite(ctx: RunContext) -> dict:
    mech = build_run_mechanism(ctx.cfg)
    base = ctx.cfg["seeds"]["mechanism"]
    stats = {}
    jobs = [("public_sample.jsonl", "aligned_public.jsonl", 0),
            ("private_train.jsonl", "aligned_train.jsonl", 1),
            ("private_validation.jsonl", "aligned_validation.jsonl", 2)]
    for src, dst, offset in jobs:
        records = load_jsonl(ctx.path(src))
        pairs = rewrite_corpus(records, mech, base + offset)
        save_aligned(pairs, ctx.path(dst))
        stats[dst] = {"pairs": len(pairs), "failures": sum(1 for p in pairs if p.error)}
    return stats


def _stage_build_pairs(ctx: RunContext) -> dict:
    stats = {}
    for src, dst in (("aligned_public.jsonl", "reverse_pairs_public.jsonl"),
                     ("aligned_train.jsonl", "reverse_pairs_train.jsonl")):
        pairs, skipped = build_reverse_pairs(load_aligned(ctx.path(src)))
        save_reverse_pairs(pairs, ctx.path(dst))
        stats[dst] = {"pairs": len(pairs), "skipped": skipped}
    return stats


def _finetune_config(ctx: RunContext, seed: int) -> FineTuneConfig:
    tr = ctx.cfg["training"]
    return FineTuneConfig(
        base_spec=tr["base_spec"],
        epochs=tr["epochs"],
        learning_rate=tr["learning_rate"],
        seed=seed,
        max_source_length=tr["max_source_length"],
        max_target_length=tr["max_target_length"],
        output_dir=ctx.run_dir / "models",
    )


def _stage_finetune(ctx: RunContext) -> dict:
    seed = ctx.cfg["seeds"]["training"]
    backend = load_backend(ctx.cfg["training"]["base_spec"])
    public_pairs = load_reverse_pairs(ctx.path("reverse_pairs_public.jsonl"))
    t_handle = train_T(public_pairs, _finetune_config(ctx, seed), backend)
    models = {"T": {"id": t_handle.id, "path": str(t_handle.path.relative_to(ctx.run_dir))}}
    if ctx.track is Track.ADVANCED:
        domain_pairs = load_reverse_pairs(ctx.path("reverse_pairs_train.jsonl"))
        validation_ids = [r.id for r in load_jsonl(ctx.path("private_validation.jsonl"))]
        tpp_handle = train_Tpp(
            t_handle,
            domain_pairs,
            _finetune_config(ctx, seed + 1),
            backend=backend,
            validation_ids=validation_ids,
        )
        models["Tpp"] = {"id": tpp_handle.id, "path": str(tpp_handle.path.relative_to(ctx.run_dir))}
    ctx.path("models.json").parent.mkdir(parents=True, exist_ok=True)
    ctx.path("models.json").write_text(
        json.dumps(models, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {name: info["id"] for name, info in models.items()}


def _release_model(ctx: RunContext) -> Path:
    models = json.loads(ctx.path("models.json").read_text(encoding="utf-8"))
    key = "Tpp" if ctx.track is Track.ADVANCED else "T"
    if key not in models:
        raise MissingArtifactError(
            f"model {key} not present; rerun finetune for track={ctx.track.value}",
            required_stage="finetune",
        )
    return ctx.run_dir / models[key]["path"]


def _stage_rerewrite(ctx: RunContext) -> dict:
    aligned = load_aligned(ctx.path("aligned_validation.jsonl"))
    model_dir = _release_model(ctx)
    backend = load_trained(model_dir)
    results = rerewrite(results_from_pairs(aligned), None, backend=backend)
    records = [
        ReleaseRecord(
            id=ap.id, text=ap.rewritten, stage="rewritten",
            mechanism=ap.mechanism, epsilon=ap.epsilon, granularity=ap.granularity,
        )
        for ap in aligned
    ]
    second = ctx.second_stage
    failures = 0
    for ap, res in zip(aligned, results):
        failures += res.error is not None
        records.append(
            ReleaseRecord(
                id=ap.id, text=res.text, stage=second,
                mechanism=ap.mechanism, epsilon=res.epsilon_per_unit,
                granularity=res.granularity.value,
            )
        )
    save_release(records, ctx.path("release.jsonl"))
    return {"records": len(records), "second_stage": second, "rerewrite_failures": failures}


def _load_split(ctx: RunContext) -> DatasetSplit:
    ds = ctx.cfg["dataset"]
    return DatasetSplit(
        train=tuple(load_jsonl(ctx.path("private_train.jsonl"))),
        validation=tuple(load_jsonl(ctx.path("private_validation.jsonl"))),
        ratio=ds["split_ratio"],
        seed=ds["split_seed"],
    )


def _stage_corpora(ctx: RunContext, split: DatasetSplit) -> dict[str, list[TextRecord]]:
    attrs = {r.id: r.attributes for r in split.validation}
    stages: dict[str, list[TextRecord]] = {}
    for rec in load_release(ctx.path("release.jsonl")):
        stages.setdefault(rec.stage, []).append(
            TextRecord(id=rec.id, text=rec.text, attributes=attrs.get(rec.id, {}))
        )
    return stages


def _stage_attack(ctx: RunContext) -> dict:
    ds = ctx.cfg["dataset"]
    ev = ctx.cfg["evaluation"]
    split = _load_split(ctx)
    stages = _stage_corpora(ctx, split)
    mech = build_run_mechanism(ctx.cfg)
    clf_cfg = ClassifierConfig(
        num_classes=ds["num_classes"],
        backend_spec=ev["classifier_spec"],
        seed=ctx.cfg["seeds"]["attack"],
    )
    reports = run_empirical_privacy(
        split,
        stages,
        mech,
        clf_cfg,
        attribute=ds["attribute"],
        n_runs=ev["n_runs"],
        run_seeds=ev["run_seeds"],
        encoders=None,
        averaging=ev["averaging"],
    )
    save_reports(reports, ctx.path("attack_reports.json"))
    return {"reports": len(reports)}


def _stage_similarity(ctx: RunContext) -> dict:
    split = _load_split(ctx)
    stages = _stage_corpora(ctx, split)
    encoders = [load_encoder(spec) for spec in ctx.cfg["evaluation"]["encoder_specs"]]
    originals = {r.id: r.text for r in split.validation}
    out = {}
    for stage in sorted(stages):
        records = sorted(stages[stage], key=lambda r: r.id)
        out[stage] = cs_score([originals[r.id] for r in records], [r.text for r in records], encoders)
    payload = {"encoders": list(ctx.cfg["evaluation"]["encoder_specs"]), "stages": out}
    ctx.path("similarity.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {"stages": sorted(out)}


def _stage_report(ctx: RunContext) -> dict:
    raw = json.loads(ctx.path("attack_reports.json").read_text(encoding="utf-8"))
    sims = json.loads(ctx.path("similarity.json").read_text(encoding="utf-8"))["stages"]
    reports = []
    for obj in raw:
        obj = dict(obj)
        obj["cs"] = sims.get(obj["stage"])
        reports.append(PrivacyReport(**obj))
    report_dir = ctx.run_dir / "reports"
    save_reports(reports, report_dir / "report.json")
    text = render_report_text(reports)
    (report_dir / "report.txt").write_text(text, encoding="utf-8")
    (report_dir / "report.csv").write_text(render_report_csv(reports), encoding="utf-8")
    print(text, end="")
    return {"reports": len(reports)}


@dataclass(frozen=True)
class StageSpec:
    func: object
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    config_keys: tuple[str, ...]


def _stage_outputs(ctx: RunContext, names: tuple[str, ...]) -> list[Path]:
    return [ctx.path(n) for n in names]


STAGES: dict[str, StageSpec] = {
    "sample-corpus": StageSpec(
        _stage_sample_corpus,
        (),
        ("public_sample.jsonl", "private_train.jsonl", "private_validation.jsonl"),
        ("dataset", "seeds"),
    ),
    "rewrite": StageSpec(
        _stage_rewrite,
        ("public_sample.jsonl", "private_train.jsonl", "private_validation.jsonl"),
        ("aligned_public.jsonl", "aligned_train.jsonl", "aligned_validation.jsonl"),
        ("mechanism", "seeds"),
    ),
    "build-pairs": StageSpec(
        _stage_build_pairs,
        ("aligned_public.jsonl", "aligned_train.jsonl"),
        ("reverse_pairs_public.jsonl", "reverse_pairs_train.jsonl"),
        (),
    ),
    "finetune": StageSpec(
        _stage_finetune,
        ("reverse_pairs_public.jsonl", "reverse_pairs_train.jsonl", "private_validation.jsonl"),
        ("models.json",),
        ("training", "seeds", "track"),
    ),
    "rerewrite": StageSpec(
        _stage_rerewrite,
        ("aligned_validation.jsonl", "models.json"),
        ("release.jsonl",),
        ("track",),
    ),
    "attack": StageSpec(
        _stage_attack,
        ("private_train.jsonl", "private_validation.jsonl", "release.jsonl"),
        ("attack_reports.json",),
        ("dataset", "mechanism", "evaluation", "seeds", "track"),
    ),
    "similarity": StageSpec(
        _stage_similarity,
        ("private_validation.jsonl", "release.jsonl"),
        ("similarity.json",),
        ("evaluation",),
    ),
    "report": StageSpec(
        _stage_report,
        ("attack_reports.json", "similarity.json"),
        (),
        (),
    ),
}


def _external_inputs(ctx: RunContext, stage: str) -> list[Path]:
    if stage != "sample-corpus":
        return []
    ds = ctx.cfg["dataset"]
    cfg_dir = ctx.cfg["_config_dir"]
    return [
        resolve_data_path(ds["private_path"], cfg_dir),
        resolve_data_path(ds["public_path"], cfg_dir),
    ]


def _report_outputs(ctx: RunContext) -> list[Path]:
    return [ctx.run_dir / "reports" / n for n in ("report.json", "report.txt", "report.csv")]


def run_stage(ctx: RunContext, name: str) -> bool:
    """Execute one stage; returns True if it ran, False if skipped as current."""
    spec = STAGES[name]
    inputs = [ctx.path(n) for n in spec.inputs]
    missing = [p for p in inputs if not p.is_file()]
    if missing:
        needed = sorted({ARTIFACTS[p.name] for p in missing}, key=STAGE_NAMES.index)
        raise MissingArtifactError(
            f"stage {name!r} needs {', '.join(p.name for p in missing)}; "
            f"run stage(s) {', '.join(needed)} first",
            required_stage=needed[0],
        )
    externals = _external_inputs(ctx, name)
    for p in externals:
        if not p.is_file():
            raise ConfigurationError(f"dataset file not found: {p}")
    config_slice = {k: ctx.cfg[k] for k in spec.config_keys}
    fp = _fingerprint(config_slice, inputs + externals)
    outputs = _stage_outputs(ctx, spec.outputs)
    if name == "report":
        outputs = _report_outputs(ctx)
    entry = ctx.manifest["stages"].get(name)
    outputs_ok = all(p.is_file() for p in outputs)
    if entry is not None:
        if entry["fingerprint"] == fp and outputs_ok:
            print(f"stage {name}: up to date, skipped")
            return False
        if entry["fingerprint"] != fp and not ctx.force:
            raise ConfigurationError(
                f"stage {name}: run directory holds results for a different config; "
                "pass --force to overwrite"
            )
    ctx.artifacts.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    stats = spec.func(ctx)
    duration = time.monotonic() - start
    ctx.manifest["stages"][name] = {
        "fingerprint": fp,
        "duration_s": round(duration, 3),
        "outputs": {p.name: _sha256_file(p) for p in outputs if p.is_file()},
        "stats": stats,
    }
    ctx.manifest["events"].append({"stage": name, "duration_s": round(duration, 3)})
    later = list(STAGES)[list(STAGES).index(name) + 1:]
    for other in later:
        ctx.manifest["stages"].pop(other, None)
    _save_manifest(ctx)
    print(f"stage {name}: done in {duration:.2f}s")
    return True


# -- argument handling -----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rewrite-again",
        description="DP text rewriting pipeline: rewrite, re-align, attack, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGE_NAMES + ("pipeline",):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "pipeline"
                           else "run all stages for the configured track")
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--run-dir", default=None,
                       help=f"run directory (default: config run_dir, then ${ENV_RUN_DIR})")
        p.add_argument("--track", choices=["basic", "advanced"], default=None,
                       help="override the configured track")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed: corpus=s, mechanism=s+1, training=s+2, attack=s+3")
        p.add_argument("--force", action="store_true",
                       help="overwrite stages recorded under a different config")
        if name == "pipeline":
            p.add_argument("--stage", choices=STAGE_NAMES, default=None,
                           help="run the chain only up to this stage")
    return parser


def _effective_config(args) -> tuple[dict, Path]:
    cfg = load_config(Path(args.config))
    if args.track is not None:
        cfg["track"] = args.track
    if args.seed is not None:
        cfg["seeds"] = {
            "corpus": args.seed,
            "mechanism": args.seed + 1,
            "training": args.seed + 2,
            "attack": args.seed + 3,
        }
    validate_config(cfg)
    run_dir = args.run_dir or cfg.get("run_dir") or os.environ.get(ENV_RUN_DIR)
    if not run_dir:
        raise ConfigurationError(
            f"no run directory: pass --run-dir, set run_dir in the config, or set ${ENV_RUN_DIR}"
        )
    run_dir = Path(run_dir)
    if not run_dir.is_absolute():
        run_dir = Path.cwd() / run_dir
    return cfg, run_dir


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg, run_dir = _effective_config(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ctx = RunContext(cfg=cfg, run_dir=run_dir, force=args.force)
    ctx.manifest = _load_manifest(run_dir)
    if args.command == "pipeline":
        last = args.stage or "report"
        chain = list(STAGE_NAMES)[: list(STAGE_NAMES).index(last) + 1]
    else:
        chain = [args.command]
    for name in chain:
        try:
            run_stage(ctx, name)
        except ConfigurationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except MissingArtifactError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        except RewriteAgainError as exc:
            print(f"error: stage {name} failed: {exc}", file=sys.stderr)
            return 4
        except Exception as exc:  # stage crash: report, do not traceback-spam
            print(f"error: stage {name} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
