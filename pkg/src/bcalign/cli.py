"""Command-line entry points for every pipeline stage.

Commands: format, extract, synth, train, eval, probe, perplexity, export,
serve. Every command accepts --seed, --config (a versioned JSON file of
defaults, echoed back so runs are reproducible from the config alone), and
--json for machine-readable output. Exit codes: 0 success, 1 user error,
2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import pathlib
import sys
import traceback

import numpy as np

from . import corpus, evaluation, explorer, features, model as model_mod, ngram, prosody, reporting
from .errors import BcAlignError

logger = logging.getLogger(__name__)

CONFIG_VERSION = "bc-config/1"


def _echo_config(args: argparse.Namespace, out_dir: pathlib.Path) -> dict:
    """Write the effective configuration so the run is reproducible from it."""
    params = {
        k: (str(v) if isinstance(v, pathlib.Path) else v)
        for k, v in vars(args).items()
        if k not in ("func", "command", "config", "json")
    }
    doc = {"version": CONFIG_VERSION, "command": args.command, "params": params}
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_json(out_dir / "config.json", doc)
    return doc


def _emit(args, summary: dict, human_lines: list[str]) -> None:
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


def _read_lexicon(path) -> tuple[str, ...]:
    if path is None:
        return corpus.DEFAULT_LEXICON
    words = [w.strip() for w in pathlib.Path(path).read_text().splitlines() if w.strip()]
    if not words:
        raise ValueError(f"lexicon file {path} is empty")
    return tuple(words)


def _transcript_files(root) -> list[pathlib.Path]:
    root = pathlib.Path(root)
    if root.is_file():
        return [root]
    files = sorted(root.glob("*.txt"))
    if not files:
        raise FileNotFoundError(f"no .txt transcripts under {root}")
    return files


def _load_transcripts(root) -> list[corpus.Transcript]:
    return [
        corpus.parse_transcript(p.read_text(), source_id=p.stem)
        for p in _transcript_files(root)
    ]


# --- commands ---

def cmd_format(args) -> int:
    results = []
    for path in args.paths:
        t = corpus.parse_transcript(pathlib.Path(path).read_text(), source_id=pathlib.Path(path).stem)
        text = corpus.format_transcript(t)
        if args.out:
            out_dir = pathlib.Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / pathlib.Path(path).name).write_text(text + "\n")
        elif not args.json:
            print(text)
        results.append({"path": str(path), "turns": len(t.turns)})
    _emit(args, {"files": results}, [f"formatted {len(results)} transcript(s)"] if args.out else [])
    return 0


def cmd_extract(args) -> int:
    lexicon = _read_lexicon(args.lexicon)
    transcripts = _load_transcripts(args.transcripts)
    samples = []
    for t in transcripts:
        for s in corpus.extract_backchannels(t, lexicon):
            s.context_text = corpus.build_context(t, s, args.turns)
            s.context_turns = args.turns
            samples.append(s)
    if not samples:
        raise BcAlignError("no backchannels found in the given transcripts")
    ratios = tuple(float(x) for x in args.ratios.split(","))
    corpus.assign_splits(samples, ratios, seed=args.seed)
    if args.audio_dir:
        enriched = _enrich_prosody(samples, pathlib.Path(args.audio_dir), args.channel)
        logger.info("prosodic features computed for %d/%d samples", enriched, len(samples))
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus.write_manifest(samples, out)
    _echo_config(args, out.parent)
    counts = {label: sum(1 for s in samples if s.split == label) for label in ("train", "val", "test")}
    _emit(
        args,
        {"manifest": str(out), "samples": len(samples), "splits": counts,
         "dialogues": len({s.dialogue_id for s in samples})},
        [f"wrote {len(samples)} samples from {len(transcripts)} transcripts to {out}",
         f"splits: {counts}"],
    )
    return 0


def _enrich_prosody(samples, audio_dir: pathlib.Path, channel: int) -> int:
    """Measure pitch range and voiced duration from per-sample clips named
    ``<dialogue_id>_<turn_index>.wav``; samples without a clip are skipped."""
    enriched = 0
    for s in samples:
        ref = f"{s.dialogue_id}_{s.turn_index}.wav"
        path = audio_dir / ref
        if not path.is_file():
            continue
        waveform, rate = prosody.read_wav(path, channel=channel)
        if s.bc_onset_s is not None and s.bc_offset_s is not None:
            lo = int(s.bc_onset_s * rate)
            hi = int(s.bc_offset_s * rate)
            waveform = waveform[lo:hi]
        track = prosody.estimate_f0(waveform, rate)
        s.pitch_range_st = prosody.pitch_range_semitones(track)
        s.duration_frames = prosody.voiced_duration_frames(track)
        s.audio_ref = ref
        enriched += 1
    return enriched


def _tone_for_sample(s: corpus.BackchannelSample, sr: int = 16000) -> np.ndarray:
    """Synthetic clip whose measured prosody roughly matches the manifest fields."""
    duration = max(0.15, s.duration_frames / 100.0 + 0.04)
    f_lo = 200.0
    f_hi = f_lo * 2 ** (s.pitch_range_st / 12.0)
    t = np.arange(int(duration * sr)) / sr
    inst = f_lo + (f_hi - f_lo) * t / duration
    phase = 2 * np.pi * np.cumsum(inst) / sr
    return 0.4 * np.sin(phase)


def cmd_synth(args) -> int:
    out = pathlib.Path(args.out)
    feat_dir = out / "features"
    corpus_dir = out / "corpus"
    feat_dir.mkdir(parents=True, exist_ok=True)
    (corpus_dir / "transcripts").mkdir(parents=True, exist_ok=True)

    cfg = features.SynthConfig(
        n_pairs=args.pairs, latent_dim=args.latent, dim_text=args.dim_text,
        dim_audio=args.dim_audio, noise_sigma=args.sigma, seed=args.seed,
        pairs_per_dialogue=args.pairs_per_dialogue, raters=args.raters,
    )
    samples, store, ratings, _ = features.generate_synthetic(cfg)
    corpus.assign_splits(samples, (0.8, 0.1, 0.1), seed=args.seed)
    if args.audio:
        audio_dir = feat_dir / "audio"
        audio_dir.mkdir(exist_ok=True)
        for s in samples:
            ref = s.id.replace(":", "_") + ".wav"
            prosody.write_wav(audio_dir / ref, _tone_for_sample(s), 16000)
            s.audio_ref = ref
            s.bc_onset_s = 0.0
            s.bc_offset_s = round(s.duration_frames / 100.0 + 0.04, 3)
    corpus.write_manifest(samples, feat_dir / "manifest.jsonl")
    features.write_vectors(store, feat_dir / "vectors.jsonl")
    features.write_ratings(ratings, feat_dir / "ratings.jsonl")

    transcripts = ngram.make_dependency_corpus(
        n_dialogues=args.trend_dialogues, blocks_per_dialogue=args.trend_blocks, seed=args.seed
    )
    trend_samples = []
    for t in transcripts:
        (corpus_dir / "transcripts" / f"{t.source_id}.txt").write_text(
            corpus.format_transcript(t) + "\n"
        )
        trend_samples.extend(corpus.extract_backchannels(t))
    corpus.assign_splits(trend_samples, (0.8, 0.1, 0.1), seed=args.seed)
    corpus.write_manifest(trend_samples, corpus_dir / "manifest.jsonl")

    _echo_config(args, out)
    _emit(
        args,
        {"out": str(out), "pairs": len(samples), "rating_records": len(ratings),
         "trend_dialogues": len(transcripts), "trend_samples": len(trend_samples),
         "audio": bool(args.audio)},
        [f"wrote {len(samples)} synthetic pairs under {feat_dir}",
         f"wrote {len(transcripts)} trend-corpus transcripts under {corpus_dir}"],
    )
    return 0


def cmd_train(args) -> int:
    samples = corpus.read_manifest(args.manifest)
    store = features.read_vectors(args.vectors)
    cfg = model_mod.ModelConfig(
        modality=args.modality, n_layers=args.layers, embed_dim=args.embed_dim,
        batch_size=args.batch_size, max_epochs=args.epochs, seed=args.seed,
        learning_rate=args.lr,
        dim_text=store.dims.get("ctx_text", 0), dim_audio=store.dims.get("bc_audio", 0),
        allow_unsafe=args.unsafe_grid,
    )
    net = model_mod.init_model(cfg)
    history = model_mod.train(net, samples, store)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_mod.save_model(net, out / "model.json")
    reporting.write_csv(
        out / "history.csv",
        ["epoch", "train_loss", "val_topk"],
        [[h["epoch"], h["train_loss"], h["val_topk"]] for h in history.epochs],
    )
    reporting.plot_history(history.epochs, out / "history.png")
    _echo_config(args, out)
    _emit(
        args,
        {"model": str(out / "model.json"), "best_epoch": history.best_epoch,
         "best_val_topk": history.best_val_topk, "epochs_run": len(history.epochs)},
        [f"trained {cfg.modality} model for {len(history.epochs)} epochs",
         f"best val top-10%: {100 * history.best_val_topk:.1f}% at epoch {history.best_epoch}",
         f"wrote {out / 'model.json'}, history.csv, history.png"],
    )
    return 0


def _model_embeddings(net, samples, store):
    batch = model_mod.make_batch(samples, store, net.config.modality)
    z_ctx = model_mod.encode_context(net, batch.ctx_text, batch.ctx_audio)
    z_bc = model_mod.encode_backchannel(net, batch.bc_audio)
    return z_ctx, z_bc


def cmd_eval(args) -> int:
    net = model_mod.load_model(args.model)
    samples = corpus.read_manifest(args.manifest)
    store = features.read_vectors(args.vectors)
    pool = [s for s in samples if s.split == args.split] if args.split != "all" else samples
    if not pool:
        raise BcAlignError(f"no samples in split {args.split!r}")
    z_ctx, z_bc = _model_embeddings(net, pool, store)
    pairing = np.arange(len(pool))

    ks = (1, 5, 10, 20, 50, 100)
    retrieval = {
        k: evaluation.topk_percent_accuracy(z_ctx, z_bc, pairing, k) for k in ks
    }
    report = {
        "split": args.split,
        "pool_size": len(pool),
        "retrieval_topk_pct": {str(k): 100 * v for k, v in retrieval.items()},
        "random_baseline_pct": {str(k): float(k) for k in ks},
        "reference_targets": evaluation.REFERENCE_TARGETS["retrieval_top10pct"],
    }
    if args.pool_size:
        chunks = [
            pool[i : i + args.pool_size] for i in range(0, len(pool), args.pool_size)
        ]
        accs = []
        for chunk in chunks:
            if len(chunk) < 2:
                continue
            zc, zb = _model_embeddings(net, chunk, store)
            accs.append(evaluation.topk_percent_accuracy(zc, zb, np.arange(len(chunk)), args.k))
        report["batch_pooled_topk_pct"] = {
            "pool_size": args.pool_size, "k": args.k, "accuracy": 100 * float(np.mean(accs))
        }

    md = ["# Evaluation report\n", f"Split: {args.split} ({len(pool)} pairs)\n",
          "## Retrieval (top-k% accuracy, pooled over the whole split)\n",
          reporting.markdown_table(
              ["k%", "model", "random"],
              [[k, f"{100 * retrieval[k]:.1f}", f"{float(k):.1f}"] for k in ks],
          )]

    if args.ratings:
        records = features.read_ratings(args.ratings)
        ids_all = [s.id for s in samples]
        z_bc_all = model_mod.encode_backchannel(
            net, store.matrix("bc_audio", ids_all)
        )
        joint_embs = {i: z_bc_all[row] for row, i in enumerate(ids_all)}
        acoustic_embs = {i: store.get("bc_audio", i) for i in ids_all}
        judgments = evaluation.build_triad_judgments(records)
        triadic = {
            "n_triads": len([j for j in judgments if j.agreement >= 0.8]),
            "joint_model": evaluation.triadic_agreement(joint_embs, judgments),
            "acoustic_baseline": evaluation.triadic_agreement(acoustic_embs, judgments),
            "random": 1 / 3,
        }
        sets = evaluation.build_matching_sets(records)
        sample_by_id = {s.id: s for s in samples}
        ctx_samples = [sample_by_id[s.anchor_id] for s in sets]
        zc, _ = _model_embeddings(net, ctx_samples, store)
        ctx_embs = {s.anchor_id: zc[i] for i, s in enumerate(sets)}
        matching = {
            "n_sets": len(sets),
            "joint_model": evaluation.matching_accuracy(sets, ctx_embs, joint_embs),
            "raters": evaluation.rater_matching_accuracy(sets),
            "random": 1 / 3,
        }
        report["triadic"] = triadic
        report["matching"] = matching
        report["reference_targets_triadic"] = evaluation.REFERENCE_TARGETS["triadic_pct"]
        report["reference_targets_matching"] = evaluation.REFERENCE_TARGETS["matching_pct"]
        md += ["## Triadic similarity agreement\n",
               reporting.markdown_table(
                   ["embeddings", "agreement %"],
                   [["joint model", 100 * triadic["joint_model"]],
                    ["acoustic baseline", 100 * triadic["acoustic_baseline"]],
                    ["random", 100 / 3]],
               ),
               "## Context-backchannel matching\n",
               reporting.markdown_table(
                   ["rater type", "accuracy %"],
                   [["joint model", 100 * matching["joint_model"]],
                    ["human raters", 100 * matching["raters"]],
                    ["random", 100 / 3]],
               )]

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reporting.write_json(out / "report.json", report)
    (out / "report.md").write_text("\n".join(md))
    reporting.write_csv(
        out / "retrieval.csv",
        ["k_percent", "model_accuracy", "random_baseline"],
        [[k, retrieval[k], k / 100] for k in ks],
    )
    fig_path = out / "retrieval_topk.png"
    _plot_topk_curve(ks, retrieval, fig_path)
    _echo_config(args, out)
    _emit(args, report,
          [f"top-10% accuracy on {args.split}: {100 * retrieval[10]:.1f}% (random 10%)",
           f"wrote {out / 'report.json'}, report.md, retrieval.csv, retrieval_topk.png"])
    return 0


def _plot_topk_curve(ks, retrieval, path):
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(list(ks), [100 * retrieval[k] for k in ks], marker="o", label="model")
    ax.plot(list(ks), list(ks), linestyle="--", color="tab:gray", label="random")
    ax.set_xlabel("k (%)")
    ax.set_ylabel("top-k% accuracy (%)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cmd_probe(args) -> int:
    net = model_mod.load_model(args.model)
    samples = corpus.read_manifest(args.manifest)
    store = features.read_vectors(args.vectors)
    records = features.read_ratings(args.ratings)
    ratings = evaluation.AffectiveRatings.from_records(records)
    sample_by_id = {s.id: s for s in samples}
    ids = [i for i in ratings.ids() if i in sample_by_id]
    if len(ids) < 4:
        raise BcAlignError("too few rated samples with manifest entries")

    rated = [sample_by_id[i] for i in ids]
    raw_bc = store.matrix("bc_audio", ids)
    z_bc = model_mod.encode_backchannel(net, raw_bc)
    feature_sets = {
        "joint_model": z_bc,
        "acoustic_baseline": raw_bc,
        "lexical": np.stack([evaluation.lexical_onehot(s.lexeme) for s in rated]),
        "prosody": np.stack([evaluation.baseline_features(s) for s in rated]),
        "lexical_prosody": np.stack(
            [evaluation.combined_baseline_features(s) for s in rated]
        ),
    }
    targets = {
        dim: ratings.target_vector(ids, dim, args.aggregate)
        for dim in features.AFFECTIVE_DIMS
    }
    report = evaluation.probe_report(ids, targets, feature_sets, args.alpha, args.seed)
    stats = evaluation.rating_stats(ratings, {i: sample_by_id[i].lexeme for i in ids})

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.save_probes(report.probes["joint_model"], out / "probes.json")
    doc = {
        "alpha": args.alpha,
        "aggregate": args.aggregate,
        "n_rated": len(ids),
        "r2": report.r2,
        "rating_pairwise_r2": stats.pairwise_r2,
        "reference_targets": evaluation.REFERENCE_TARGETS["probe_r2"],
    }
    reporting.write_json(out / "probe_report.json", doc)
    dims = list(features.AFFECTIVE_DIMS)
    rows = [[name] + [report.r2[name][d] for d in dims] for name in feature_sets]
    (out / "probe_report.md").write_text(
        "# Affective probe report\n\n"
        + reporting.markdown_table(["features"] + dims, rows)
        + "\nPairwise mean-rating correlations: "
        + ", ".join(f"{k} R2={v:.2f}" for k, v in stats.pairwise_r2.items())
        + "\n"
    )
    reporting.write_csv(out / "probe_r2.csv", ["features"] + dims, rows)
    lex_rows = [
        [lex]
        + [f"{stats.lexeme_stats[lex][d][0]:.2f}+/-{stats.lexeme_stats[lex][d][1]:.2f}"
           for d in dims]
        for lex in sorted(stats.lexeme_stats)
    ]
    reporting.write_csv(out / "lexeme_stats.csv", ["lexeme"] + dims, lex_rows)
    reporting.plot_rating_distributions(stats.medians, stats.pairwise_r2,
                                        out / "rating_distributions.png")
    _echo_config(args, out)
    _emit(args, doc,
          [f"probe R2 ({args.aggregate} targets, alpha={args.alpha}):"]
          + [f"  {name}: " + ", ".join(f"{d}={report.r2[name][d]:.3f}" for d in dims)
             for name in feature_sets]
          + [f"wrote {out / 'probes.json'}, probe_report.json/.md, probe_r2.csv, "
             "lexeme_stats.csv, rating_distributions.png"])
    return 0


def cmd_perplexity(args) -> int:
    transcripts = _load_transcripts(args.transcripts)
    samples = corpus.read_manifest(args.manifest)
    ks = tuple(int(k) for k in args.turns.split(","))
    result = ngram.context_length_protocol(
        transcripts, samples, ks=ks, order=args.order, mean=args.mean
    )
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        ["trained"] + [result["perplexity"][k] for k in ks],
        ["uniform baseline"] + [result["uniform_baseline"][k] for k in ks],
    ]
    headers = ["model"] + [f"{k} turns" for k in ks]
    reporting.write_json(out / "perplexity.json", result)
    (out / "perplexity.md").write_text(
        "# Backchannel perplexity by context length\n\n"
        + reporting.markdown_table(headers, rows)
    )
    reporting.write_csv(out / "perplexity.csv", headers, rows)
    reporting.plot_perplexity(ks, result["perplexity"], result["uniform_baseline"],
                              out / "perplexity.png")
    _echo_config(args, out)
    _emit(args, result,
          [f"order-{args.order} model on {result['n_test_samples']} test backchannels:"]
          + [f"  k={k}: ppl {result['perplexity'][k]:.2f} "
             f"(uniform {result['uniform_baseline'][k]:.2f})" for k in ks]
          + [f"wrote {out / 'perplexity.json'}, .md, .csv, .png"])
    return 0


def cmd_export(args) -> int:
    net = model_mod.load_model(args.model)
    samples = corpus.read_manifest(args.manifest)
    store = features.read_vectors(args.vectors)
    probes = evaluation.load_probes(args.probes)
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle = explorer.export_explorer(net, samples, store, probes, out,
                                      probe_source=str(args.probes))
    xdim, ydim = args.axes.split(",")
    fig_path = out.with_name(out.stem + "_scatter.png")
    reporting.plot_bundle_scatter(bundle["points"], xdim, ydim, fig_path,
                                  lexemes=args.lexemes.split(",") if args.lexemes else None)
    _echo_config(args, out.parent)
    _emit(args,
          {"bundle": str(out), "points": len(bundle["points"]),
           "model_hash": bundle["axes"]["model_hash"], "scatter": str(fig_path)},
          [f"exported {len(bundle['points'])} points to {out}",
           f"scatter figure: {fig_path}"])
    return 0


def cmd_serve(args) -> int:
    from . import server

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    print(f"serving {args.bundle} on http://{args.host}:{args.port} (Ctrl-C to stop)")
    server.serve(args.bundle, args.audio_dir, args.static_dir, args.host, args.port)
    return 0


# --- parser ---

def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--config", type=pathlib.Path, default=None,
                        help="JSON config file of per-command defaults")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    parser = argparse.ArgumentParser(
        prog="bcalign",
        description="Align dialogue contexts with backchannel realizations in a shared embedding space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("format", parents=[common], help="parse and re-emit transcripts in normal form")
    p.add_argument("paths", nargs="+", help="transcript file(s)")
    p.add_argument("--out", default=None, help="directory for normalized copies (default: stdout)")
    p.set_defaults(func=cmd_format)
    subparsers["format"] = p

    p = sub.add_parser("extract", parents=[common], help="extract backchannel samples into a manifest")
    p.add_argument("--transcripts", required=True, help="transcript file or directory")
    p.add_argument("--out", required=True, help="output manifest JSONL path")
    p.add_argument("--turns", type=int, default=5, help="context turns K")
    p.add_argument("--ratios", default="0.8,0.1,0.1", help="train,val,test ratios")
    p.add_argument("--lexicon", default=None, help="override lexicon file (one word per line)")
    p.add_argument("--audio-dir", default=None,
                   help="per-sample WAVs (<dialogue>_<turn>.wav) to measure prosody from")
    p.add_argument("--channel", type=int, default=0, help="WAV channel to analyze")
    p.set_defaults(func=cmd_extract)
    subparsers["extract"] = p

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic desk-scale workspace")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--latent", type=int, default=8)
    p.add_argument("--dim-text", type=int, default=32)
    p.add_argument("--dim-audio", type=int, default=24)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--pairs-per-dialogue", type=int, default=20)
    p.add_argument("--raters", type=int, default=3)
    p.add_argument("--audio", action="store_true", help="emit synthetic tone WAVs")
    p.add_argument("--trend-dialogues", type=int, default=100)
    p.add_argument("--trend-blocks", type=int, default=8)
    p.set_defaults(func=cmd_synth)
    subparsers["synth"] = p

    p = sub.add_parser("train", parents=[common], help="train the joint projection model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--modality", choices=model_mod.MODALITIES, default="audio_text")
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--unsafe-grid", action="store_true",
                   help="allow hyperparameters outside the published grid")
    p.set_defaults(func=cmd_train)
    subparsers["train"] = p

    p = sub.add_parser("eval", parents=[common], help="retrieval/triadic/matching evaluation")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--ratings", default=None, help="ratings JSONL for triadic/matching sections")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--k", type=float, default=10.0, help="k%% for batch-pooled evaluation")
    p.add_argument("--pool-size", type=int, default=None,
                   help="also report top-k%% averaged over pools of this size")
    p.set_defaults(func=cmd_eval)
    subparsers["eval"] = p

    p = sub.add_parser("probe", parents=[common], help="fit affective ridge probes and baselines")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--aggregate", choices=["median", "mean"], default="median")
    p.set_defaults(func=cmd_probe)
    subparsers["probe"] = p

    p = sub.add_parser("perplexity", parents=[common],
                       help="n-gram perplexity versus context length")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--turns", default="1,3,5")
    p.add_argument("--mean", choices=["geometric", "arithmetic"], default="geometric")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_perplexity)
    subparsers["perplexity"] = p

    p = sub.add_parser("export", parents=[common], help="export the explorer bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--probes", required=True, help="fitted probes JSON from the probe command")
    p.add_argument("--out", required=True, help="bundle JSON path")
    p.add_argument("--axes", default="surprisal,polarity", help="scatter figure axes")
    p.add_argument("--lexemes", default=None, help="comma-separated lexeme filter for the figure")
    p.set_defaults(func=cmd_export)
    subparsers["export"] = p

    p = sub.add_parser("serve", parents=[common], help="serve the explorer bundle over HTTP")
    p.add_argument("--bundle", required=True)
    p.add_argument("--audio-dir", default=None)
    p.add_argument("--static-dir", default=None, help="directory of UI assets to serve at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)
    subparsers["serve"] = p

    return parser, subparsers


def _apply_config_file(args, parser, subparsers, argv) -> argparse.Namespace:
    if not args.config:
        return args
    doc = json.loads(pathlib.Path(args.config).read_text())
    if doc.get("version") not in (None, CONFIG_VERSION):
        raise ValueError(f"unsupported config version {doc.get('version')!r}")
    section = doc.get(args.command) or doc.get("params") or {}
    known = {a.dest for a in subparsers[args.command]._actions}
    unknown = set(section) - known
    if unknown:
        raise ValueError(f"config keys not recognized by {args.command!r}: {sorted(unknown)}")
    subparsers[args.command].set_defaults(**section)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args, parser, subparsers, argv)
        return args.func(args)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    except (BcAlignError, OSError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
