import json
import urllib.error
import urllib.request

import numpy as np
import pytest

from bcalign import cli
from bcalign.corpus import BackchannelSample, read_manifest
from bcalign.errors import BadSchema, MissingFeature, MissingProbe
from bcalign.evaluation import RidgeProbe, load_probes
from bcalign.explorer import (
    build_bundle,
    export_explorer,
    load_bundle,
    region_stats,
    validate_bundle,
)
from bcalign.features import FeatureStore
from bcalign.model import ModelConfig, encode_backchannel, init_model
from bcalign.server import make_server, start_in_thread
from conftest import DATA_DIR


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small synthetic workspace with a trained model, probes, and a bundle."""
    root = tmp_path_factory.mktemp("ws")
    assert run_cli(
        "synth", "--out", root, "--pairs", "160", "--latent", "6",
        "--dim-text", "12", "--dim-audio", "10", "--sigma", "0.05",
        "--pairs-per-dialogue", "8", "--trend-dialogues", "30",
        "--trend-blocks", "6", "--audio", "--seed", "5",
    ) == 0
    feat = root / "features"
    assert run_cli(
        "train", "--manifest", feat / "manifest.jsonl", "--vectors", feat / "vectors.jsonl",
        "--out", root / "run", "--layers", "2", "--embed-dim", "16",
        "--batch-size", "64", "--epochs", "8", "--lr", "5e-3", "--unsafe-grid", "--seed", "1",
    ) == 0
    assert run_cli(
        "probe", "--model", root / "run" / "model.json",
        "--manifest", feat / "manifest.jsonl", "--vectors", feat / "vectors.jsonl",
        "--ratings", feat / "ratings.jsonl", "--out", root / "probe", "--seed", "2",
    ) == 0
    assert run_cli(
        "export", "--model", root / "run" / "model.json",
        "--manifest", feat / "manifest.jsonl", "--vectors", feat / "vectors.jsonl",
        "--probes", root / "probe" / "probes.json", "--out", root / "bundle.json",
    ) == 0
    return root


class TestFormatCommand:
    def test_prints_normal_form(self, capsys):
        assert run_cli("format", DATA_DIR / "dialogue_scandals_b.txt") == 0
        out = capsys.readouterr().out.strip()
        assert out == (DATA_DIR / "dialogue_scandals_b.txt").read_text().strip()

    def test_malformed_input_is_user_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("<A> oops { /\n")
        assert run_cli("format", bad) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_file_is_user_error(self):
        assert run_cli("format", "/nonexistent/file.txt") == 1


class TestExtractCommand:
    def test_extract_fixture_corpus(self, tmp_path, capsys):
        out = tmp_path / "manifest.jsonl"
        code = run_cli(
            "extract", "--transcripts", DATA_DIR, "--out", out,
            "--turns", "2", "--ratios", "0.5,0.25,0.25", "--json",
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["samples"] == 12  # 3 + 7 + 2 across the three fixtures
        samples = read_manifest(out)
        assert all(s.context_turns == 2 for s in samples)
        assert all(s.context_text.split()[-1] != s.lexeme for s in samples)

    def test_no_backchannels_is_user_error(self, tmp_path):
        t = tmp_path / "t.txt"
        t.write_text("<A> nothing here / <B> nope /\n")
        assert run_cli("extract", "--transcripts", t, "--out", tmp_path / "m.jsonl") == 1

    def test_audio_dir_measures_prosody(self, tmp_path):
        from bcalign.prosody import write_wav

        tdir = tmp_path / "transcripts"
        tdir.mkdir()
        for i in range(3):
            (tdir / f"dlg{i}.txt").write_text("<A> well how about that / <B> yeah /\n")
        audio_dir = tmp_path / "audio"
        audio_dir.mkdir()
        sr = 16000
        t = np.arange(sr) / sr
        write_wav(audio_dir / "dlg0_1.wav", 0.5 * np.sin(2 * np.pi * 220 * t), sr)
        out = tmp_path / "m.jsonl"
        assert run_cli(
            "extract", "--transcripts", tdir, "--out", out, "--audio-dir", audio_dir,
        ) == 0
        samples = {s.id: s for s in read_manifest(out)}
        measured = samples["dlg0:1"]
        assert 95 <= measured.duration_frames <= 100
        assert abs(measured.pitch_range_st) < 0.1
        assert measured.audio_ref == "dlg0_1.wav"
        assert samples["dlg1:1"].duration_frames is None  # no clip shipped


class TestSynthAndTrain:
    def test_workspace_layout(self, workspace):
        feat = workspace / "features"
        assert (feat / "manifest.jsonl").exists()
        assert (feat / "vectors.jsonl").exists()
        assert (feat / "ratings.jsonl").exists()
        assert list((feat / "audio").glob("*.wav"))
        assert list((workspace / "corpus" / "transcripts").glob("*.txt"))
        assert (workspace / "config.json").exists()

    def test_train_outputs(self, workspace):
        run = workspace / "run"
        assert (run / "model.json").exists()
        assert (run / "history.png").exists()
        history = (run / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_topk"
        assert len(history) == 9  # header + 8 epochs

    def test_train_learns_alignment(self, workspace):
        history = (workspace / "run" / "history.csv").read_text().splitlines()[1:]
        best = max(float(line.split(",")[2]) for line in history)
        assert best >= 0.5  # low-noise synthetic data is easily learnable

    def test_config_echo_reproducibility(self, workspace):
        doc = json.loads((workspace / "run" / "config.json").read_text())
        assert doc["version"] == "bc-config/1"
        assert doc["command"] == "train"
        assert doc["params"]["epochs"] == 8


class TestEvalCommand:
    def test_eval_report(self, workspace, tmp_path, capsys):
        feat = workspace / "features"
        code = run_cli(
            "eval", "--model", workspace / "run" / "model.json",
            "--manifest", feat / "manifest.jsonl", "--vectors", feat / "vectors.jsonl",
            "--ratings", feat / "ratings.jsonl", "--out", tmp_path, "--json",
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["retrieval_topk_pct"]["100"] == 100.0
        assert report["triadic"]["joint_model"] >= report["triadic"]["random"] - 0.1
        assert 0 <= report["matching"]["raters"] <= 1
        assert (tmp_path / "report.md").exists()
        assert (tmp_path / "retrieval.csv").exists()
        assert (tmp_path / "retrieval_topk.png").exists()


class TestProbeCommand:
    def test_probe_outputs(self, workspace):
        probe_dir = workspace / "probe"
        report = json.loads((probe_dir / "probe_report.json").read_text())
        for dim in ("energy", "polarity", "surprisal"):
            assert report["r2"]["joint_model"][dim] > report["r2"]["prosody"][dim]
        probes = load_probes(probe_dir / "probes.json")
        assert set(probes) == {"energy", "polarity", "surprisal"}
        assert (probe_dir / "rating_distributions.png").exists()
        assert (probe_dir / "lexeme_stats.csv").exists()


class TestPerplexityCommand:
    def test_trend_over_fixture_corpus(self, workspace, tmp_path, capsys):
        code = run_cli(
            "perplexity", "--transcripts", workspace / "corpus" / "transcripts",
            "--manifest", workspace / "corpus" / "manifest.jsonl",
            "--order", "14", "--turns", "1,3,5", "--out", tmp_path, "--json",
        )
        assert code == 0
        result = json.loads(capsys.readouterr().out)
        ppl = result["perplexity"]
        assert ppl["5"] < ppl["3"] < ppl["1"]
        assert (tmp_path / "perplexity.md").exists()
        assert (tmp_path / "perplexity.csv").exists()
        assert (tmp_path / "perplexity.png").exists()


class TestConfigFile:
    def test_config_file_supplies_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "version": "bc-config/1",
            "synth": {"pairs": 9, "pairs_per_dialogue": 3, "trend_dialogues": 4,
                      "trend_blocks": 2},
        }))
        code = run_cli("synth", "--out", tmp_path / "ws", "--config", cfg, "--json")
        assert code == 0
        assert json.loads(capsys.readouterr().out)["pairs"] == 9

    def test_unknown_config_key_is_user_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {"bogus": 1}}))
        assert run_cli("synth", "--out", tmp_path / "ws", "--config", cfg) == 1


class TestExplorerBundle:
    @staticmethod
    def _tiny_setup():
        cfg = ModelConfig(modality="audio", n_layers=1, embed_dim=4, batch_size=1024,
                          seed=3, dim_audio=3, dim_text=0, allow_unsafe=True)
        model = init_model(cfg)
        store = FeatureStore()
        samples = []
        rng = np.random.default_rng(8)
        for i in range(3):
            sid = f"b{i}"
            store.add("bc_audio", sid, rng.normal(size=3))
            samples.append(BackchannelSample(
                id=sid, dialogue_id="d", speaker="A", lexeme="yeah", turn_index=i,
                pitch_range_st=float(i), duration_frames=10 + i,
            ))
        probes = {
            dim: RidgeProbe(rng.normal(size=4), 0.5, 1.0, dim)
            for dim in ("energy", "polarity", "surprisal")
        }
        return model, samples, store, probes

    def test_coords_equal_hand_applied_probes(self, tmp_path):
        model, samples, store, probes = self._tiny_setup()
        bundle = export_explorer(model, samples, store, probes, tmp_path / "b.json")
        for s, point in zip(samples, bundle["points"]):
            z = encode_backchannel(model, store.get("bc_audio", s.id))
            for dim, probe in probes.items():
                expected = float(z @ probe.weights + probe.bias)
                assert point["coords"][dim] == pytest.approx(expected, abs=1e-12)

    def test_empty_manifest_valid_bundle(self, tmp_path):
        model, _, store, probes = self._tiny_setup()
        bundle = export_explorer(model, [], store, probes, tmp_path / "b.json")
        assert bundle["points"] == []
        validate_bundle(bundle)

    def test_deterministic_bytes(self, tmp_path):
        model, samples, store, probes = self._tiny_setup()
        export_explorer(model, samples, store, probes, tmp_path / "b1.json")
        export_explorer(model, samples, store, probes, tmp_path / "b2.json")
        assert (tmp_path / "b1.json").read_bytes() == (tmp_path / "b2.json").read_bytes()

    def test_missing_probe(self, tmp_path):
        model, samples, store, probes = self._tiny_setup()
        del probes["energy"]
        with pytest.raises(MissingProbe):
            build_bundle(model, samples, store, probes)

    def test_missing_prosody(self):
        model, samples, store, probes = self._tiny_setup()
        samples[0].pitch_range_st = None
        with pytest.raises(MissingFeature):
            build_bundle(model, samples, store, probes)

    def test_duplicate_ids_rejected(self):
        bundle = {
            "format": "bc-explorer/1",
            "axes": {"names": ["energy"]},
            "points": [
                {"id": "x", "lexeme": "yeah",
                 "coords": {"energy": 0, "polarity": 0, "surprisal": 0},
                 "duration_frames": 1, "pitch_range_st": 0.0},
            ] * 2,
        }
        with pytest.raises(BadSchema):
            validate_bundle(bundle)


class TestRegionStats:
    @staticmethod
    def _points(n=40, seed=12):
        rng = np.random.default_rng(seed)
        return [
            {
                "id": f"p{i}", "lexeme": ["yeah", "mm", "really"][i % 3],
                "coords": {
                    "energy": float(rng.normal()),
                    "polarity": float(rng.normal()),
                    "surprisal": float(rng.normal()),
                },
                "duration_frames": int(rng.integers(5, 60)),
                "pitch_range_st": float(rng.uniform(0, 8)),
            }
            for i in range(n)
        ]

    def test_rectangle_containing_everything(self):
        points = self._points()
        stats = region_stats(points, "energy", "polarity", -99, 99, -99, 99)
        assert stats["count"] == len(points)
        assert stats["avg_duration_frames"] == pytest.approx(
            np.mean([p["duration_frames"] for p in points])
        )
        assert stats["avg_pitch_range_st"] == pytest.approx(
            np.mean([p["pitch_range_st"] for p in points])
        )

    def test_empty_rectangle(self):
        stats = region_stats(self._points(), "energy", "polarity", 500, 501, 500, 501)
        assert stats == {"count": 0, "avg_duration_frames": None, "avg_pitch_range_st": None}

    def test_against_offline_filter_oracle(self):
        points = self._points(seed=77)
        rect = (-0.5, 0.9, -1.2, 0.4)
        stats = region_stats(points, "surprisal", "polarity", *rect)
        inside = [
            p for p in points
            if rect[0] <= p["coords"]["surprisal"] <= rect[1]
            and rect[2] <= p["coords"]["polarity"] <= rect[3]
        ]
        assert stats["count"] == len(inside)
        assert stats["avg_duration_frames"] == pytest.approx(
            sum(p["duration_frames"] for p in inside) / len(inside)
        )

    def test_lexeme_filter(self):
        points = self._points()
        all_stats = region_stats(points, "energy", "polarity", -99, 99, -99, 99)
        yeah = region_stats(points, "energy", "polarity", -99, 99, -99, 99, lexemes=["yeah"])
        assert yeah["count"] == sum(1 for p in points if p["lexeme"] == "yeah")
        assert yeah["count"] < all_stats["count"]

    def test_partition_additivity(self):
        points = self._points(n=500, seed=3)
        xs = sorted(p["coords"]["energy"] for p in points)
        cut = (xs[249] + xs[250]) / 2  # between point values: no double counting
        whole = region_stats(points, "energy", "polarity", -99, 99, -99, 99)
        left = region_stats(points, "energy", "polarity", -99, cut, -99, 99)
        right = region_stats(points, "energy", "polarity", cut, 99, -99, 99)
        assert left["count"] + right["count"] == whole["count"]
        weighted = (
            left["count"] * left["avg_duration_frames"]
            + right["count"] * right["avg_duration_frames"]
        ) / whole["count"]
        assert weighted == pytest.approx(whole["avg_duration_frames"], abs=1e-9)

    def test_malformed_rectangle(self):
        with pytest.raises(ValueError):
            region_stats(self._points(), "energy", "polarity", 5, -5, 0, 1)
        with pytest.raises(ValueError):
            region_stats(self._points(), "energy", "bogus", 0, 1, 0, 1)

    def test_shared_fixture_consistency(self):
        # the frontend component tests consume the same two files
        bundle = load_bundle(DATA_DIR / "explorer_bundle.json")
        fixture = json.loads((DATA_DIR / "explorer_region_fixture.json").read_text())
        stats = region_stats(bundle["points"], **fixture["rect"])
        assert stats == fixture["expected_stats"]


class TestServer:
    @pytest.fixture()
    def service(self, workspace):
        server = make_server(
            workspace / "bundle.json",
            audio_dir=workspace / "features" / "audio",
        )
        start_in_thread(server)
        host, port = server.server_address
        yield f"http://{host}:{port}"
        server.shutdown()
        server.server_close()

    @staticmethod
    def _get(url):
        with urllib.request.urlopen(url) as resp:
            return resp.status, json.loads(resp.read())

    def test_points_endpoint_serves_full_bundle(self, service, workspace):
        status, bundle = self._get(f"{service}/api/points")
        assert status == 200
        assert bundle == load_bundle(workspace / "bundle.json")

    def test_region_stats_matches_offline(self, service, workspace):
        bundle = load_bundle(workspace / "bundle.json")
        rect = dict(xdim="surprisal", ydim="polarity", xmin=-1, xmax=5, ymin=-1, ymax=5)
        status, stats = self._get(
            f"{service}/api/region-stats?xdim={rect['xdim']}&ydim={rect['ydim']}"
            f"&xmin={rect['xmin']}&xmax={rect['xmax']}&ymin={rect['ymin']}&ymax={rect['ymax']}"
        )
        assert status == 200
        offline = region_stats(bundle["points"], **rect)
        assert stats == json.loads(json.dumps(offline))

    def test_region_stats_with_lexeme_filter(self, service, workspace):
        bundle = load_bundle(workspace / "bundle.json")
        lexeme = bundle["points"][0]["lexeme"]
        status, stats = self._get(
            f"{service}/api/region-stats?xdim=energy&ydim=polarity"
            f"&xmin=-99&xmax=99&ymin=-99&ymax=99&lexeme={lexeme}"
        )
        assert status == 200
        assert stats["count"] == sum(1 for p in bundle["points"] if p["lexeme"] == lexeme)

    def test_malformed_rectangle_400(self, service):
        with pytest.raises(urllib.error.HTTPError) as err:
            self._get(f"{service}/api/region-stats?xdim=energy&ydim=polarity"
                      f"&xmin=5&xmax=-5&ymin=0&ymax=1")
        assert err.value.code == 400
        with pytest.raises(urllib.error.HTTPError) as err:
            self._get(f"{service}/api/region-stats?xdim=energy")
        assert err.value.code == 400

    def test_audio_stream_and_404(self, service, workspace):
        bundle = load_bundle(workspace / "bundle.json")
        point = bundle["points"][0]
        with urllib.request.urlopen(f"{service}/api/audio/{point['id']}") as resp:
            data = resp.read()
        assert data[:4] == b"RIFF"
        with pytest.raises(urllib.error.HTTPError) as err:
            self._get(f"{service}/api/audio/nonexistent")
        assert err.value.code == 404

    def test_identical_requests_identical_responses(self, service):
        url = f"{service}/api/region-stats?xdim=energy&ydim=surprisal&xmin=-2&xmax=2&ymin=-2&ymax=2"
        assert self._get(url) == self._get(url)

    def test_unknown_route_404(self, service):
        with pytest.raises(urllib.error.HTTPError) as err:
            self._get(f"{service}/api/bogus")
        assert err.value.code == 404
