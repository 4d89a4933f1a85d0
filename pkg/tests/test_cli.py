import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from asmsieve import cli
from asmsieve.schema import validate, save_features
from asmsieve.similarity import save_embeddings

DATA = Path(__file__).parent / "data"
MINI = DATA / "mini"

GOOD_LISTING = """\
; FUNCTION alpha
401000: mov eax, 0x2f41
401005: call sub_401100
40100a: ret
; FUNCTION beta
401100: xor eax, eax
401102: mov ecx, 0x77
401107: ret
; FUNCTION tiny
401200: ret
"""


def run(argv):
    return cli.main(argv)


@pytest.fixture
def listing(tmp_path):
    path = tmp_path / "app.lst"
    path.write_text(GOOD_LISTING)
    return path


@pytest.fixture
def features_file(tmp_path):
    docs = {
        "lib/sha384_init@ARM/O2": validate(
            json.loads((DATA / "sha384_init_arm.json").read_text())
        ),
        "lib/sha384_init@x86-64/O2": validate(
            json.loads((DATA / "sha384_init_x86_64.json").read_text())
        ),
    }
    path = tmp_path / "features.jsonl"
    save_features(path, docs)
    return path


class TestIngest:
    def test_valid_listing(self, listing, tmp_path, capsys):
        out = tmp_path / "corpus.jsonl"
        assert run(["ingest", str(listing), "--library", "lib", "--arch", "x86-64",
                    "--opt-level", "O0", "-o", str(out)]) == 0
        records = [json.loads(l) for l in out.read_text().splitlines()]
        # `tiny` has fewer than three instructions and is filtered
        assert [r["source_symbol"] for r in records] == ["alpha", "beta"]

    def test_min_instr_flag(self, listing, tmp_path):
        out = tmp_path / "corpus.jsonl"
        assert run(["ingest", str(listing), "--library", "lib", "--arch", "x86-64",
                    "--opt-level", "O0", "--min-instr", "1", "-o", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 3

    def test_malformed_listing_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.lst"
        bad.write_text("mov eax, 1\n")
        rc = run(["ingest", str(bad), "--library", "lib", "--arch", "x86-64",
                  "--opt-level", "O0", "-o", str(tmp_path / "c.jsonl")])
        assert rc == 2
        assert "line 1" in capsys.readouterr().err

    def test_unknown_flag_exit_2(self, listing, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            run(["ingest", str(listing), "--library", "lib", "--arch", "x86-64",
                 "--opt-level", "O0", "--bogus"])
        assert excinfo.value.code == 2

    def test_truncation_flag(self, tmp_path):
        lines = "\n".join(f"40{i:04x}: mov eax, {i}" for i in range(200))
        path = tmp_path / "long.lst"
        path.write_text("; FUNCTION big\n" + lines + "\n")
        out = tmp_path / "corpus.jsonl"
        assert run(["ingest", str(path), "--library", "lib", "--arch", "x86-64",
                    "--opt-level", "O0", "-o", str(out)]) == 0
        record = json.loads(out.read_text())
        assert len(record["instructions"]) == 128 and record["truncated"] is True


class TestExtract:
    def _corpus(self, listing, tmp_path):
        out = tmp_path / "corpus.jsonl"
        run(["ingest", str(listing), "--library", "lib", "--arch", "x86-64",
             "--opt-level", "O0", "-o", str(out)])
        return out

    def test_static_client_deterministic(self, listing, tmp_path):
        corpus = self._corpus(listing, tmp_path)
        outputs = []
        for name in ("f1.jsonl", "f2.jsonl"):
            out = tmp_path / name
            assert run(["extract", "--corpus", str(corpus), "--client", "static",
                        "-o", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        first = json.loads(outputs[0].decode().splitlines()[0])
        assert first["features"]["subcall_targets"] == 1

    def test_replay_without_fixtures_is_config_error(self, listing, tmp_path):
        corpus = self._corpus(listing, tmp_path)
        rc = run(["extract", "--corpus", str(corpus), "--client", "replay",
                  "-o", str(tmp_path / "f.jsonl")])
        assert rc == 4

    def test_replay_miss_exits_3(self, listing, tmp_path, capsys):
        corpus = self._corpus(listing, tmp_path)
        empty = tmp_path / "empty_fixtures"
        empty.mkdir()
        rc = run(["extract", "--corpus", str(corpus), "--client", "replay",
                  "--fixtures", str(empty), "-o", str(tmp_path / "f.jsonl")])
        assert rc == 3
        assert "extraction failed" in capsys.readouterr().err

    def test_mini_corpus_replay_identical_across_runs(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        run(["ingest", str(MINI / "listings" / "miniapp_x86-64_O0.lst"),
             "--library", "miniapp", "--arch", "x86-64", "--opt-level", "O0",
             "-o", str(corpus)])
        outputs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            assert run(["extract", "--corpus", str(corpus), "--client", "replay",
                        "--fixtures", str(MINI / "fixtures"), "-o", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_parallel_extraction_same_bytes(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        run(["ingest", str(MINI / "listings" / "miniapp_x86-64_O0.lst"),
             "--library", "miniapp", "--arch", "x86-64", "--opt-level", "O0",
             "-o", str(corpus)])
        serial = tmp_path / "serial.jsonl"
        parallel = tmp_path / "parallel.jsonl"
        run(["extract", "--corpus", str(corpus), "--client", "replay",
             "--fixtures", str(MINI / "fixtures"), "-o", str(serial)])
        run(["extract", "--corpus", str(corpus), "--client", "replay",
             "--fixtures", str(MINI / "fixtures"), "--parallel", "4",
             "-o", str(parallel)])
        assert serial.read_bytes() == parallel.read_bytes()


class TestIndexSearch:
    def test_search_indexed_document_ranks_first(self, features_file, tmp_path, capsys):
        snap = tmp_path / "index.snap"
        assert run(["index", "--features", str(features_file), "-o", str(snap)]) == 0
        rc = run(["search", "--index", str(snap), "--query", str(features_file),
                  "--id", "lib/sha384_init@ARM/O2", "-k", "2", "--format", "json"])
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert result["results"][0]["id"] == "lib/sha384_init@ARM/O2"
        assert result["results"][0]["score"] == 1.0

    def test_search_unknown_id_exit_2(self, features_file, tmp_path):
        snap = tmp_path / "index.snap"
        run(["index", "--features", str(features_file), "-o", str(snap)])
        assert run(["search", "--index", str(snap), "--query", str(features_file),
                    "--id", "nope"]) == 2

    def test_corrupt_snapshot_exit_2(self, features_file, tmp_path):
        snap = tmp_path / "index.snap"
        snap.write_bytes(b"garbage")
        assert run(["search", "--index", str(snap), "--query", str(features_file)]) == 2

    def test_parallel_search_matches_serial(self, features_file, tmp_path):
        snap = tmp_path / "index.snap"
        run(["index", "--features", str(features_file), "-o", str(snap)])
        serial, parallel = tmp_path / "serial.out", tmp_path / "parallel.out"
        assert run(["search", "--index", str(snap), "--query", str(features_file),
                    "--format", "json", "-o", str(serial)]) == 0
        assert run(["search", "--index", str(snap), "--query", str(features_file),
                    "--format", "json", "--parallel", "4", "-o", str(parallel)]) == 0
        assert serial.read_bytes() == parallel.read_bytes()


class TestDiff:
    def test_three_fields_differ(self, features_file, capsys):
        rc = run(["diff", "--features", str(features_file),
                  "lib/sha384_init@ARM/O2", "lib/sha384_init@x86-64/O2",
                  "--format", "json"])
        assert rc == 0
        fields = [d["field"] for d in json.loads(capsys.readouterr().out)]
        assert fields == ["ret_type", "int_consts", "inferred_algo"]

    def test_table_output(self, features_file, capsys):
        rc = run(["diff", "--features", str(features_file),
                  "lib/sha384_init@ARM/O2", "lib/sha384_init@x86-64/O2"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "ret_type" in out and "added" in out

    def test_missing_id_exit_2(self, features_file):
        assert run(["diff", "--features", str(features_file), "nope",
                    "lib/sha384_init@ARM/O2"]) == 2


class TestRerank:
    def test_rerank_pipeline(self, features_file, tmp_path, capsys):
        snap = tmp_path / "index.snap"
        run(["index", "--features", str(features_file), "-o", str(snap)])
        emb = tmp_path / "emb.jsonl"
        save_embeddings(emb, {
            "lib/sha384_init@ARM/O2": [1.0, 0.2],
            "lib/sha384_init@x86-64/O2": [0.9, 0.3],
        })
        rc = run(["rerank", "--index", str(snap), "--embeddings", str(emb),
                  "--query", str(features_file), "--id", "lib/sha384_init@ARM/O2",
                  "--k1", "2", "--k2", "1", "--format", "json"])
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert result["results"][0]["id"] == "lib/sha384_init@ARM/O2"

    def test_k2_greater_than_k1_is_config_error(self, features_file, tmp_path):
        snap = tmp_path / "index.snap"
        run(["index", "--features", str(features_file), "-o", str(snap)])
        emb = tmp_path / "emb.jsonl"
        save_embeddings(emb, {"lib/sha384_init@ARM/O2": [1.0]})
        assert run(["rerank", "--index", str(snap), "--embeddings", str(emb),
                    "--query", str(features_file), "--k1", "1", "--k2", "5"]) == 4


class TestEval:
    def test_committed_report_reproduced(self, tmp_path):
        feature_files = []
        for opt in ("O0", "O3"):
            corpus = tmp_path / f"corpus_{opt}.jsonl"
            run(["ingest", str(MINI / "listings" / f"miniapp_x86-64_{opt}.lst"),
                 "--library", "miniapp", "--arch", "x86-64", "--opt-level", opt,
                 "-o", str(corpus)])
            features = tmp_path / f"features_{opt}.jsonl"
            assert run(["extract", "--corpus", str(corpus), "--client", "replay",
                        "--fixtures", str(MINI / "fixtures"), "-o", str(features)]) == 0
            feature_files.append(features)
        report = tmp_path / "report.json"
        assert run(["eval", "--pool", str(MINI / "pairs.jsonl"),
                    "--features", str(feature_files[0]),
                    "--features", str(feature_files[1]),
                    "--format", "json", "-o", str(report)]) == 0
        assert report.read_bytes() == (MINI / "expected_report.json").read_bytes()

    def test_table_format(self, features_file, tmp_path, capsys):
        pool = tmp_path / "pool.jsonl"
        pool.write_text(json.dumps({
            "left": "lib/sha384_init@ARM/O2",
            "right": "lib/sha384_init@x86-64/O2",
            "pairing": "cross_architecture",
        }) + "\n")
        rc = run(["eval", "--pool", str(pool), "--features", str(features_file),
                  "--format", "table"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "MRR" in out and "Recall@1" in out

    def test_hybrid_scorer_needs_embeddings(self, features_file, tmp_path, capsys):
        pool = tmp_path / "pool.jsonl"
        pool.write_text(json.dumps({
            "left": "lib/sha384_init@ARM/O2",
            "right": "lib/sha384_init@x86-64/O2",
            "pairing": "cross_architecture",
        }) + "\n")
        assert run(["eval", "--pool", str(pool), "--features", str(features_file),
                    "--scorer", "hybrid"]) == 2
        emb = tmp_path / "emb.jsonl"
        save_embeddings(emb, {
            "lib/sha384_init@ARM/O2": [0.6, 0.8],
            "lib/sha384_init@x86-64/O2": [0.8, 0.6],
        })
        rc = run(["eval", "--pool", str(pool), "--features", str(features_file),
                  "--scorer", "hybrid", "--embeddings", str(emb), "--format", "json"])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["scorer"] == "hybrid" and report["per_pair_ranks"] == [1]


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, features_file, tmp_path, capsys):
        snap = tmp_path / "index.snap"
        run(["index", "--features", str(features_file), "-o", str(snap)])
        cfg = tmp_path / "asmsieve.conf"
        cfg.write_text("# search defaults\nk = 1\nformat = json\n")
        rc = run(["--config", str(cfg), "search", "--index", str(snap),
                  "--query", str(features_file), "--id", "lib/sha384_init@ARM/O2"])
        assert rc == 0
        assert len(json.loads(capsys.readouterr().out)["results"]) == 1
        rc = run(["--config", str(cfg), "search", "--index", str(snap),
                  "--query", str(features_file), "--id", "lib/sha384_init@ARM/O2",
                  "-k", "2"])
        assert len(json.loads(capsys.readouterr().out)["results"]) == 2

    def test_missing_config_exit_4(self, tmp_path):
        assert run(["--config", str(tmp_path / "absent.conf"), "ingest", "x",
                    "--library", "l", "--arch", "a", "--opt-level", "O0"]) == 4


class TestEntryPoint:
    def test_console_script_help(self):
        exe = shutil.which("asmsieve")
        if exe is None:
            pytest.skip("console script not on PATH")
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "ingest" in proc.stdout and "rerank" in proc.stdout

    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "asmsieve.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
