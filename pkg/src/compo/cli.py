"""Command-line interface tying the pipeline together.

Subcommands: prompts gen/shuffle, mcid build, cis evaluate, metrics is/fid,
analyze shuffle/bias, report table1/summary. A JSON config file can supply
any option (flags win); every command writes a run manifest recording the
resolved parameters, a config hash, and input-file hashes, so re-runs with
identical inputs are byte-identical. Exit codes: 0 success, 2 config error,
3 data error, 4 numerical error.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .analysis import bias_ratios, bias_report_csv, sequence_invariance_test
from .backends.cache import EmbeddingCache
from .backends.contracts import ImageRef
from .backends.mock import MockClassifierBackend, MockEmbeddingBackend, MockWorldConfig
from .errors import CompoError, ConfigError, DataError
from .mcid import build_dataset, load_corpus
from .metrics import (
    MetricsRow,
    fit_gaussian,
    frechet_distance,
    inception_score,
    metrics_table,
    metrics_table_csv,
)
from .prompts import (
    Grammar,
    load_prompt_manifest,
    sample_prompts,
    shuffle_prompt,
    write_prompt_manifest,
)
from .scoring import evaluate, load_records, write_records
from .util import canonical_json, default_jobs, sha256_file, write_json
from .vocabulary import load_vocabulary

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CompoError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def resolve_params(ctx, section: str, flags: dict, defaults: dict, required=()) -> dict:
    """Merge parameter sources: explicit flag > config section > config
    top level > built-in default. Required keys must resolve non-None."""
    config = (ctx.obj or {}).get("config", {})
    from_file = {}
    for key, value in config.items():
        if not isinstance(value, dict):
            from_file[key.replace("-", "_")] = value
    for key, value in (config.get(section) or {}).items():
        from_file[key.replace("-", "_")] = value
    merged = {}
    for key, flag in flags.items():
        if flag is not None:
            merged[key] = flag
        elif key in from_file:
            merged[key] = from_file[key]
        else:
            merged[key] = defaults.get(key)
    missing = sorted(k for k in required if merged.get(k) is None)
    if missing:
        raise ConfigError(
            f"{section}: missing required parameter(s): {', '.join(missing)} "
            "(pass a flag or set them in the config file)"
        )
    return merged


def write_run_manifest(out_dir: Path, command: str, params: dict, inputs, outputs) -> None:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()}
    manifest = {
        "command": command,
        "tool_version": __version__,
        "params": params,
        "config_hash": hashlib.sha256(canonical_json(params).encode("utf-8")).hexdigest(),
        "input_hashes": {str(path): sha256_file(path) for path in sorted(set(map(str, inputs)))},
        "outputs": sorted(outputs),
    }
    write_json(out_dir / "run_manifest.json", manifest)


def grammar_from(params: dict) -> Grammar:
    return Grammar(
        oxford_comma=not params.get("no_oxford_comma", False),
        trailing_period=bool(params.get("trailing_period", False)),
    )


def load_vocab_from(params: dict):
    return load_vocabulary(params["vocab"], format=params.get("vocab_format"))


def make_embedding_backend(params: dict, vocab):
    backend = params.get("backend", "mock")
    if backend == "mock":
        config = MockWorldConfig(
            vocab=vocab,
            noise_level=float(params.get("noise", 0.0)),
            seed=int(params.get("mock_seed", 0)),
        )
        return MockEmbeddingBackend(config)
    if backend == "onnx":
        if not params.get("bundle"):
            raise ConfigError("backend onnx requires --bundle pointing at a model bundle")
        from .backends.onnx_backend import OnnxEmbeddingBackend

        return OnnxEmbeddingBackend(params["bundle"])
    raise ConfigError(f"unknown backend {backend!r}")


def make_classifier_backend(params: dict):
    backend = params.get("backend", "mock")
    if backend == "mock":
        return MockClassifierBackend(
            seed=int(params.get("mock_seed", 0)),
            class_count=int(params.get("class_count", 16)),
            feature_dim=int(params.get("feature_dim", 8)),
        )
    if backend == "onnx":
        if not params.get("bundle"):
            raise ConfigError("backend onnx requires --bundle pointing at a model bundle")
        from .backends.onnx_backend import OnnxClassifierBackend

        return OnnxClassifierBackend(params["bundle"])
    raise ConfigError(f"unknown backend {backend!r}")


def load_image_manifest(path: str | Path) -> dict[int, list[ImageRef]]:
    """Read an image manifest (JSONL) into per-prompt image references.

    Accepts composite-dataset manifests (composite_path + component_indices)
    and plain image manifests (path + optional planted_indices); paths
    resolve against the manifest's directory.
    """
    path = Path(path)
    source: dict[int, list[ImageRef]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "prompt_id" not in obj:
                raise DataError(f"{path}:{line_no}: image manifest entry lacks prompt_id")
            rel = obj.get("path") or obj.get("composite_path")
            resolved = str((path.parent / rel).resolve()) if rel else None
            planted = obj.get("planted_indices", obj.get("component_indices"))
            prompt_id = int(obj["prompt_id"])
            refs = source.setdefault(prompt_id, [])
            image_id = int(obj.get("image_id", len(refs)))
            refs.append(
                ImageRef(
                    prompt_id=prompt_id,
                    image_id=image_id,
                    path=resolved,
                    planted=None if planted is None else tuple(int(i) for i in planted),
                )
            )
    for refs in source.values():
        refs.sort(key=lambda r: r.image_id)
    return source


def list_image_dir(path: str | Path) -> list[ImageRef]:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path} is not a directory of images")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"no images found under {path}")
    return [ImageRef(prompt_id=0, image_id=i, path=str(p)) for i, p in enumerate(files)]


def manifest_seed(path: str | Path) -> int:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                return int(json.loads(line).get("seed", 0))
    return 0


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; explicit flags override its values.")
@click.pass_context
def main(ctx, config_path):
    """Multi-component text-to-image evaluation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = {}
    if config_path:
        try:
            ctx.obj["config"] = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            click.echo(f"error: config file {config_path} is not valid JSON: {exc}", err=True)
            sys.exit(ConfigError.exit_code)


@main.group()
def prompts():
    """Generate and transform prompt manifests."""


@prompts.command("gen")
@click.option("--vocab", type=click.Path(exists=True), default=None)
@click.option("--vocab-format", type=click.Choice(["plain-lines", "id-tab-name"]), default=None)
@click.option("--k", type=int, default=None)
@click.option("--m", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--no-oxford-comma", is_flag=True, default=None)
@click.option("--trailing-period", is_flag=True, default=None)
@click.option("--paper-scale", is_flag=True, default=None,
              help="Raise m to the full-protocol 10000 (default is desk-scale 100).")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def prompts_gen(ctx, **flags):
    """Sample m k-component prompts into <out>/prompts.jsonl."""
    params = resolve_params(
        ctx, "prompts gen", flags,
        defaults={"seed": 0, "no_oxford_comma": False, "trailing_period": False,
                  "paper_scale": False},
        required=("vocab", "k", "out"),
    )
    if params["m"] is None:
        params["m"] = 10000 if params["paper_scale"] else 100
    vocab = load_vocab_from(params)
    grammar = grammar_from(params)
    sampled = sample_prompts(vocab, int(params["k"]), int(params["m"]),
                             int(params["seed"]), grammar)
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_prompt_manifest(sampled, out_dir / "prompts.jsonl", int(params["seed"]))
    write_run_manifest(out_dir, "prompts gen", params, [params["vocab"]], ["prompts.jsonl"])
    click.echo(f"wrote {len(sampled)} prompts to {out_dir / 'prompts.jsonl'}")


@prompts.command("shuffle")
@click.option("--vocab", type=click.Path(exists=True), default=None)
@click.option("--vocab-format", type=click.Choice(["plain-lines", "id-tab-name"]), default=None)
@click.option("--in", "input_manifest", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--no-oxford-comma", is_flag=True, default=None)
@click.option("--trailing-period", is_flag=True, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def prompts_shuffle(ctx, **flags):
    """Re-render a prompt manifest with randomly permuted component order."""
    params = resolve_params(
        ctx, "prompts shuffle", flags,
        defaults={"seed": 0, "no_oxford_comma": False, "trailing_period": False},
        required=("vocab", "input_manifest", "out"),
    )
    vocab = load_vocab_from(params)
    grammar = grammar_from(params)
    originals = load_prompt_manifest(params["input_manifest"], vocab, grammar)
    shuffled = [shuffle_prompt(p, int(params["seed"])) for p in originals]
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_prompt_manifest(shuffled, out_dir / "prompts.jsonl", int(params["seed"]))
    write_run_manifest(
        out_dir, "prompts shuffle", params,
        [params["vocab"], params["input_manifest"]], ["prompts.jsonl"],
    )
    click.echo(f"wrote {len(shuffled)} shuffled prompts to {out_dir / 'prompts.jsonl'}")


@main.group()
def mcid():
    """Build multi-component composite datasets."""


@mcid.command("build")
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--class-map", type=click.Path(exists=True), default=None)
@click.option("--vocab", type=click.Path(exists=True), default=None)
@click.option("--vocab-format", type=click.Choice(["plain-lines", "id-tab-name"]), default=None)
@click.option("--prompts", "prompts_path", type=click.Path(exists=True), default=None)
@click.option("--per-prompt", type=int, default=None)
@click.option("--row-height", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--no-oxford-comma", is_flag=True, default=None)
@click.option("--trailing-period", is_flag=True, default=None)
@click.option("--paper-scale", is_flag=True, default=None,
              help="Raise per-prompt images to the full-protocol 16 (desk-scale default 4).")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def mcid_build(ctx, **flags):
    """Compose per-prompt collages plus <out>/manifest.jsonl ground truth."""
    params = resolve_params(
        ctx, "mcid build", flags,
        defaults={"seed": 0, "row_height": 256, "no_oxford_comma": False,
                  "trailing_period": False, "paper_scale": False},
        required=("corpus", "vocab", "prompts_path", "out"),
    )
    if params["per_prompt"] is None:
        params["per_prompt"] = 16 if params["paper_scale"] else 4
    vocab = load_vocab_from(params)
    grammar = grammar_from(params)
    specs = load_prompt_manifest(params["prompts_path"], vocab, grammar)
    corpus = load_corpus(params["corpus"], vocab, params.get("class_map"))
    out_dir = Path(params["out"])
    entries = build_dataset(
        corpus, specs, int(params["per_prompt"]), int(params["seed"]), out_dir,
        row_height=int(params["row_height"]),
    )
    inputs = [params["vocab"], params["prompts_path"]]
    if params.get("class_map"):
        inputs.append(params["class_map"])
    outputs = ["manifest.jsonl"] + [e["composite_path"] for e in entries]
    write_run_manifest(out_dir, "mcid build", params, inputs, outputs)
    click.echo(f"built {len(entries)} composites under {out_dir}")


@main.group()
def cis():
    """Score images against their prompts."""


@cis.command("evaluate")
@click.option("--vocab", type=click.Path(exists=True), default=None)
@click.option("--vocab-format", type=click.Choice(["plain-lines", "id-tab-name"]), default=None)
@click.option("--prompts", "prompts_path", type=click.Path(exists=True), default=None)
@click.option("--images", "images_path", type=click.Path(exists=True), default=None,
              help="Image manifest JSONL (a composite manifest works directly).")
@click.option("--backend", type=click.Choice(["mock", "onnx"]), default=None)
@click.option("--bundle", type=click.Path(exists=True), default=None)
@click.option("--mock-seed", type=int, default=None)
@click.option("--noise", type=float, default=None)
@click.option("--scale", type=float, default=None)
@click.option("--k-max", type=int, default=None)
@click.option("--empty-text", type=str, default=None)
@click.option("--skip-broken", is_flag=True, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--cache-dir", type=click.Path(), default=None,
              help="Embedding cache location; COMPO_CACHE_DIR overrides the default.")
@click.option("--no-oxford-comma", is_flag=True, default=None)
@click.option("--trailing-period", is_flag=True, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def cis_evaluate(ctx, **flags):
    """Evaluate CIS over an image manifest; writes records.jsonl + summary.json."""
    params = resolve_params(
        ctx, "cis evaluate", flags,
        defaults={"backend": "mock", "mock_seed": 0, "noise": 0.0, "scale": 100.0,
                  "k_max": 8, "empty_text": "", "skip_broken": False,
                  "no_oxford_comma": False, "trailing_period": False},
        required=("vocab", "prompts_path", "images_path", "out"),
    )
    if params["jobs"] is None:
        params["jobs"] = default_jobs()
    vocab = load_vocab_from(params)
    grammar = grammar_from(params)
    specs = load_prompt_manifest(params["prompts_path"], vocab, grammar)
    image_source = load_image_manifest(params["images_path"])
    backend = make_embedding_backend(params, vocab)
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = params.get("cache_dir") or os.environ.get("COMPO_CACHE_DIR") or out_dir / ".cache"
    cache = EmbeddingCache(cache_dir)
    result, records = evaluate(
        specs, image_source, backend,
        scale=float(params["scale"]),
        k_max=int(params["k_max"]),
        empty_text=params["empty_text"],
        skip_broken=bool(params["skip_broken"]),
        text_cache=cache,
        jobs=int(params["jobs"]),
    )
    write_records(records, out_dir / "records.jsonl")
    summary = {
        "k": result.k,
        "m": result.m,
        "n": result.n,
        "cis": result.cis,
        "scale": float(params["scale"]),
        "backend_id": backend.backend_id,
        "vocab_hash": vocab.content_hash(),
        "seed": manifest_seed(params["prompts_path"]),
        "record_count": result.record_count,
    }
    write_json(out_dir / "summary.json", summary)
    write_run_manifest(
        out_dir, "cis evaluate", params,
        [params["vocab"], params["prompts_path"], params["images_path"]],
        ["records.jsonl", "summary.json"],
    )
    click.echo(f"CIS_{result.k} = {result.cis:.3f} over {result.record_count} records")


@main.group()
def metrics():
    """Distribution metrics over image sets."""


@metrics.command("is")
@click.option("--images", "images_dir", type=click.Path(exists=True), default=None)
@click.option("--backend", type=click.Choice(["mock", "onnx"]), default=None)
@click.option("--bundle", type=click.Path(exists=True), default=None)
@click.option("--mock-seed", type=int, default=None)
@click.option("--class-count", type=int, default=None)
@click.option("--feature-dim", type=int, default=None)
@click.option("--splits", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def metrics_is(ctx, **flags):
    """Inception score of a directory of images."""
    params = resolve_params(
        ctx, "metrics is", flags,
        defaults={"backend": "mock", "mock_seed": 0, "class_count": 16,
                  "feature_dim": 8, "splits": 10},
        required=("images_dir", "out"),
    )
    backend = make_classifier_backend(params)
    refs = list_image_dir(params["images_dir"])
    probs = backend.class_probs(refs)
    mean, std = inception_score(probs, splits=int(params["splits"]))
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "is.json", {
        "is_mean": mean, "is_std": std, "n": len(refs),
        "splits": int(params["splits"]), "backend_id": backend.backend_id,
    })
    write_run_manifest(out_dir, "metrics is", params,
                       [r.path for r in refs], ["is.json"])
    click.echo(f"IS = {mean:.2f} ± {std:.2f} over {len(refs)} images")


@metrics.command("fid")
@click.option("--images-a", type=click.Path(exists=True), default=None)
@click.option("--images-b", type=click.Path(exists=True), default=None)
@click.option("--backend", type=click.Choice(["mock", "onnx"]), default=None)
@click.option("--bundle", type=click.Path(exists=True), default=None)
@click.option("--mock-seed", type=int, default=None)
@click.option("--class-count", type=int, default=None)
@click.option("--feature-dim", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def metrics_fid(ctx, **flags):
    """Frechet distance between feature Gaussians of two image directories."""
    params = resolve_params(
        ctx, "metrics fid", flags,
        defaults={"backend": "mock", "mock_seed": 0, "class_count": 16, "feature_dim": 8},
        required=("images_a", "images_b", "out"),
    )
    backend = make_classifier_backend(params)
    refs_a = list_image_dir(params["images_a"])
    refs_b = list_image_dir(params["images_b"])
    g1 = fit_gaussian(backend.features(refs_a))
    g2 = fit_gaussian(backend.features(refs_b))
    fid = frechet_distance(g1, g2)
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "fid.json", {
        "fid": fid, "n_a": len(refs_a), "n_b": len(refs_b),
        "dim": g1.dim, "backend_id": backend.backend_id,
    })
    write_run_manifest(out_dir, "metrics fid", params,
                       [r.path for r in refs_a + refs_b], ["fid.json"])
    click.echo(f"FID = {fid:.4f} ({len(refs_a)} vs {len(refs_b)} images, d={g1.dim})")


@main.group()
def analyze():
    """Statistical analyses over score records."""


@analyze.command("shuffle")
@click.option("--vocab", type=click.Path(exists=True), default=None)
@click.option("--vocab-format", type=click.Choice(["plain-lines", "id-tab-name"]), default=None)
@click.option("--prompts-original", type=click.Path(exists=True), default=None)
@click.option("--prompts-shuffled", type=click.Path(exists=True), default=None)
@click.option("--records-original", type=click.Path(exists=True), default=None)
@click.option("--records-shuffled", type=click.Path(exists=True), default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--no-oxford-comma", is_flag=True, default=None)
@click.option("--trailing-period", is_flag=True, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def analyze_shuffle(ctx, **flags):
    """Chi-squared test of detected components, original vs shuffled prompts."""
    params = resolve_params(
        ctx, "analyze shuffle", flags,
        defaults={"alpha": 0.05, "no_oxford_comma": False, "trailing_period": False},
        required=("vocab", "prompts_original", "prompts_shuffled",
                  "records_original", "records_shuffled", "out"),
    )
    vocab = load_vocab_from(params)
    grammar = grammar_from(params)
    originals = load_prompt_manifest(params["prompts_original"], vocab, grammar)
    shuffled = load_prompt_manifest(params["prompts_shuffled"], vocab, grammar)
    rec_orig = load_records(params["records_original"])
    rec_shuf = load_records(params["records_shuffled"])
    outcome = sequence_invariance_test(
        rec_orig, rec_shuf, originals, shuffled, alpha=float(params["alpha"])
    )
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "shuffle_test.json", {
        "statistic": outcome.chi.statistic,
        "df": outcome.chi.df,
        "p_value": outcome.chi.p_value,
        "n_total": outcome.chi.n_total,
        "low_expected": outcome.chi.low_expected,
        "alpha": float(params["alpha"]),
        "verdict": outcome.verdict,
    })
    write_run_manifest(
        out_dir, "analyze shuffle", params,
        [params["vocab"], params["prompts_original"], params["prompts_shuffled"],
         params["records_original"], params["records_shuffled"]],
        ["shuffle_test.json"],
    )
    click.echo(
        f"X2({outcome.chi.df}, N = {outcome.chi.n_total}) = {outcome.chi.statistic:.2f}, "
        f"p = {outcome.chi.p_value:.3f} -> {outcome.verdict}"
    )


@analyze.command("bias")
@click.option("--vocab", type=click.Path(exists=True), default=None)
@click.option("--vocab-format", type=click.Choice(["plain-lines", "id-tab-name"]), default=None)
@click.option("--prompts", "prompts_path", type=click.Path(exists=True), default=None)
@click.option("--records", "records_path", type=click.Path(exists=True), default=None)
@click.option("--min-k", type=int, default=None)
@click.option("--no-oxford-comma", is_flag=True, default=None)
@click.option("--trailing-period", is_flag=True, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def analyze_bias(ctx, **flags):
    """Per-component generation-rate ranking from a records file."""
    params = resolve_params(
        ctx, "analyze bias", flags,
        defaults={"min_k": 2, "no_oxford_comma": False, "trailing_period": False},
        required=("vocab", "prompts_path", "records_path", "out"),
    )
    vocab = load_vocab_from(params)
    grammar = grammar_from(params)
    specs = load_prompt_manifest(params["prompts_path"], vocab, grammar)
    records = load_records(params["records_path"])
    report = bias_ratios(records, specs, min_k=int(params["min_k"]))
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "bias.csv").write_text(bias_report_csv(report), encoding="utf-8")
    write_json(out_dir / "bias.json", {
        "quantiles": report.quantiles,
        "components": [
            {"label_index": e.label_index, "name": e.name, "included": e.included,
             "detected": e.detected, "ratio": e.ratio}
            for e in report.entries
        ],
    })
    write_run_manifest(
        out_dir, "analyze bias", params,
        [params["vocab"], params["prompts_path"], params["records_path"]],
        ["bias.csv", "bias.json"],
    )
    click.echo(
        f"{len(report.entries)} components, ratio median {report.quantiles['median']:.3f} "
        f"(min {report.quantiles['min']:.3f}, max {report.quantiles['max']:.3f})"
    )


@main.group()
def report():
    """Render result tables and summaries."""


@report.command("table1")
@click.option("--runs", "runs_dir", type=click.Path(exists=True), default=None,
              help="Directory of per-(model,k) JSON summaries with is_mean/is_std/fid.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def report_table1(ctx, **flags):
    """Assemble IS/FID summaries into one table (CSV + JSON)."""
    params = resolve_params(ctx, "report table1", flags, defaults={},
                            required=("runs_dir", "out"))
    runs_dir = Path(params["runs_dir"])
    rows = []
    vocab_hashes = set()
    inputs = []
    for path in sorted(runs_dir.glob("*.json")):
        obj = json.loads(path.read_text(encoding="utf-8"))
        if not {"model", "k", "is_mean", "is_std", "fid"} <= obj.keys():
            continue
        if "vocab_hash" in obj:
            vocab_hashes.add(obj["vocab_hash"])
        rows.append(MetricsRow(
            model=str(obj["model"]), k=int(obj["k"]),
            is_mean=float(obj["is_mean"]), is_std=float(obj["is_std"]),
            fid=float(obj["fid"]),
        ))
        inputs.append(path)
    if len(vocab_hashes) > 1:
        raise ConfigError(
            "refusing to tabulate runs with different vocabulary hashes: "
            + ", ".join(sorted(vocab_hashes))
        )
    if not rows:
        raise DataError(f"no metric summaries found under {runs_dir}")
    table = metrics_table(rows)
    out_dir = Path(params["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "table1.json", table)
    (out_dir / "table1.csv").write_text(metrics_table_csv(table), encoding="utf-8")
    write_run_manifest(out_dir, "report table1", params, inputs,
                       ["table1.csv", "table1.json"])
    click.echo((out_dir / "table1.csv").read_text(encoding="utf-8").rstrip("\n"))


@report.command("summary")
@click.option("--summary", "summary_path", type=click.Path(exists=True), default=None,
              help="A summary.json produced by cis evaluate.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def report_summary(ctx, **flags):
    """Render a scoring summary as a one-line result."""
    params = resolve_params(ctx, "report summary", flags, defaults={},
                            required=("summary_path",))
    obj = json.loads(Path(params["summary_path"]).read_text(encoding="utf-8"))
    line = f"CIS_{obj['k']} = {obj['cis']:.3f}"
    click.echo(line)
    if params.get("out"):
        out_dir = Path(params["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.txt").write_text(line + "\n", encoding="utf-8")
        write_run_manifest(out_dir, "report summary", params,
                           [params["summary_path"]], ["summary.txt"])


if __name__ == "__main__":
    main()
