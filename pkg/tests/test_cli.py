import json
from dataclasses import replace

import pytest

from labelloop import decoders
from labelloop.cli import main
from labelloop.hypotheses import DecodeOutcome
from labelloop.tensor import read_ltf


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def cat_dog_dir(tmp_path, capsys):
    d = tmp_path / "catdog"
    assert run(capsys, "gen", "--out-dir", d, "--fixture", "cat-dog")[0] == 0
    return d


def gen_random(capsys, d, *extra):
    args = ["gen", "--out-dir", d, "--seed", 3, "--vocab", 12, "--batch", 4, "--frames", 5, 15, *extra]
    assert run(capsys, *args)[0] == 0
    return d


class TestGen:
    def test_same_seed_byte_identical(self, tmp_path, capsys):
        a = gen_random(capsys, tmp_path / "a")
        b = gen_random(capsys, tmp_path / "b")
        for name in ("model.json", "enc.ltf", "lengths.json", "model.W_out.ltf"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_fixed_frame_range(self, tmp_path, capsys):
        d = tmp_path / "d"
        run(capsys, "gen", "--out-dir", d, "--batch", 2, "--frames", 4, 4)
        assert json.loads((d / "lengths.json").read_text()) == [4, 4]
        assert read_ltf(d / "enc.ltf").shape == (2, 4, 16)

    def test_seed_from_environment(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("TL_SEED", "3")
        env = tmp_path / "env"
        run(capsys, "gen", "--out-dir", env, "--vocab", 12, "--batch", 4, "--frames", 5, 15)
        flag = gen_random(capsys, tmp_path / "flag")
        assert (env / "model.json").read_bytes() == (flag / "model.json").read_bytes()

    def test_cat_dog_fixture(self, cat_dog_dir):
        doc = json.loads((cat_dog_dir / "model.json").read_text())
        assert doc["format"] == "labelloop-table"
        assert json.loads((cat_dog_dir / "lengths.json").read_text()) == [4, 4]

    def test_bad_frames(self, tmp_path, capsys):
        assert run(capsys, "gen", "--out-dir", tmp_path, "--frames", 5, 2)[0] == 2


class TestDecode:
    @pytest.mark.parametrize("algo", ["sequential", "frame-looping", "label-looping"])
    def test_cat_dog(self, cat_dog_dir, capsys, algo):
        code, out, err = run(capsys, "decode", "--data", cat_dog_dir, "--algo", algo)
        assert code == 0
        assert [json.loads(line)["text"] for line in out.splitlines()] == ["CAT", "DOG"]
        assert json.loads(err)["algorithm"] == algo

    def test_empty_batch(self, tmp_path, capsys):
        d = tmp_path / "empty"
        run(capsys, "gen", "--out-dir", d, "--batch", 0)
        code, out, _ = run(capsys, "decode", "--data", d)
        assert code == 0 and out == ""

    def test_twice_byte_identical(self, tmp_path, capsys):
        d = gen_random(capsys, tmp_path / "r")
        run(capsys, "decode", "--data", d, "--out", tmp_path / "1.jsonl")
        run(capsys, "decode", "--data", d, "--out", tmp_path / "2.jsonl", "--batch-size", 3)
        first = (tmp_path / "1.jsonl").read_bytes()
        assert first == (tmp_path / "2.jsonl").read_bytes()
        assert len(first.splitlines()) == 4

    def test_tdt_output_has_durations(self, tmp_path, capsys):
        d = gen_random(capsys, tmp_path / "t", "--decoder", "tdt", "--max-duration", 2)
        code, out, _ = run(capsys, "decode", "--data", d)
        assert code == 0
        assert all("durations" in json.loads(line) for line in out.splitlines())

    def test_frame_looping_tdt_is_usage_error(self, tmp_path, capsys):
        d = gen_random(capsys, tmp_path / "t", "--decoder", "tdt")
        assert run(capsys, "decode", "--data", d, "--algo", "frame-looping")[0] == 2

    def test_decoder_mismatch_is_usage_error(self, cat_dog_dir, capsys):
        assert run(capsys, "decode", "--data", cat_dog_dir, "--decoder", "tdt")[0] == 2

    def test_missing_inputs(self, tmp_path, capsys):
        assert run(capsys, "decode")[0] == 2
        assert run(capsys, "decode", "--data", tmp_path / "nowhere")[0] == 2

    def test_bad_max_symbols(self, cat_dog_dir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["decode", "--data", str(cat_dog_dir), "--max-symbols", "0"])
        assert exc.value.code == 2


class TestVerify:
    def test_random_rnnt_all_algorithms(self, capsys):
        code, out, _ = run(capsys, "verify", "--random", 10, "--algos", "sequential", "label-looping", "frame-looping")
        assert code == 0 and out.startswith("OK: 10 case(s)")

    def test_random_tdt(self, capsys):
        assert run(capsys, "verify", "--random", 10, "--decoder", "tdt", "--seed", 50)[0] == 0

    def test_files(self, cat_dog_dir, capsys):
        assert run(capsys, "verify", "--data", cat_dog_dir, "--algos", "sequential,frame-looping,label-looping")[0] == 0

    def test_corrupted_decoder_is_detected(self, capsys, monkeypatch):
        original = decoders.decode_label_looping_rnnt

        def no_guard(model, req, counters=None):
            return original(model, replace(req, max_symbols_per_frame=1000), counters)

        monkeypatch.setattr(decoders, "decode_label_looping_rnnt", no_guard)
        code, _, err = run(capsys, "verify", "--random", 20, "--max-symbols", 2)
        assert code == 1
        assert "differ at utterance" in err

    def test_single_algorithm_is_usage_error(self, capsys):
        assert run(capsys, "verify", "--random", 1, "--algos", "sequential")[0] == 2

    def test_unknown_algorithm(self, capsys):
        assert run(capsys, "verify", "--random", 1, "--algos", "sequential,beam")[0] == 2


class TestBench:
    def test_cat_dog(self, cat_dog_dir, tmp_path, capsys):
        report = tmp_path / "bench.json"
        code, out, _ = run(capsys, "bench", "--data", cat_dog_dir, "--json", report)
        assert code == 0
        assert "rel. speedup" in out
        doc = json.loads(report.read_text())
        assert doc["baseline"]["warmup_runs"] == 2 and doc["baseline"]["measured_runs"] == 3
        assert doc["comparison"]["counter_ratios"]["predictor_batched_invocations"] == 2.5

    def test_mismatch_exits_one(self, cat_dog_dir, capsys, monkeypatch):
        def wrong(model, req, counters=None):
            return [DecodeOutcome([], [], 0.0) for _ in range(req.enc.shape[0])]

        monkeypatch.setattr(decoders, "decode_label_looping_rnnt", wrong)
        assert run(capsys, "bench", "--data", cat_dog_dir)[0] == 1

    def test_flags(self, cat_dog_dir, tmp_path, capsys):
        report = tmp_path / "b.json"
        code, _, _ = run(
            capsys, "bench", "--data", cat_dog_dir, "--warmup", 0, "--measured", 1,
            "--baseline", "sequential", "--batch-size", 1, "--no-precompute", "--json", report,
        )
        assert code == 0
        doc = json.loads(report.read_text())
        assert doc["baseline"]["algorithm"] == "sequential"
        assert doc["candidate"]["precompute_projections"] is False
        assert doc["comparison"]["batch_size"] == 1
