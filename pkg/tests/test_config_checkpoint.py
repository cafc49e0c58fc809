import numpy as np
import pytest

from plnmt import codemodel, nmt
from plnmt.checkpoint import (
    MAGIC, Checkpoint, decode_checkpoint, encode_checkpoint, from_code_model, from_nmt_model,
    load_checkpoint, save_checkpoint, to_code_model, to_nmt_model,
)
from plnmt.config import PipelineConfig, load_config_file, parse_config_text, resolve
from plnmt.errors import CompatibilityError, ConfigError, FormatError
from plnmt.textpipe import build_vocab


class TestConfig:
    def test_defaults(self):
        cfg = resolve(environ={})
        assert cfg == PipelineConfig()
        assert cfg.beam_size == 5 and cfg.nmt_clip_norm == 5.0

    def test_precedence(self, tmp_path):
        (tmp_path / "c.cfg").write_text("seed = 7\nbeam-size = 3  # narrow\ncode_k = 8\n")
        file_values = load_config_file(tmp_path / "c.cfg")
        cfg = resolve(file_values, {"beam_size": 2, "code_k": None}, environ={})
        assert cfg.seed == 7
        assert cfg.beam_size == 2
        assert cfg.code_k == 8

    def test_seed_environment_fallback(self):
        assert resolve(environ={"PLNMT_SEED": "42"}).seed == 42
        assert resolve({"seed": 3}, environ={"PLNMT_SEED": "42"}).seed == 3
        assert resolve(flag_values={"seed": "9"}, environ={"PLNMT_SEED": "42"}).seed == 9

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match="line|:2:"):
            parse_config_text("seed = 1\nwarp_speed = 9\n", "x.cfg")
        with pytest.raises(ConfigError):
            resolve(flag_values={"warp_speed": 1}, environ={})

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            parse_config_text("code_k = four")
        with pytest.raises(ConfigError):
            parse_config_text("just words")
        with pytest.raises(ConfigError):
            parse_config_text("code_hard = maybe")

    def test_optional_and_bool_values(self):
        vals = parse_config_text("nmt_max_steps = none\nmax_len = 40\nfloat64 = yes\n")
        assert vals == {"nmt_max_steps": None, "max_len": 40, "float64": True}

    def test_format_round_trip(self):
        cfg = PipelineConfig(seed=4, code_tau_final=0.5, code_hard=False)
        assert resolve(parse_config_text(cfg.format()), environ={}) == cfg

    def test_sub_configs(self):
        cfg = PipelineConfig(seed=5, nmt_hidden=16, code_n=1, code_k=2)
        assert cfg.nmt_config().hidden == 16 and cfg.nmt_config().seed == 5
        assert (cfg.code_config().n, cfg.code_config().k) == (1, 2)


def _nmt_model(dtype=np.float32):
    src = build_vocab([["a", "b", "c"]], 20)
    tgt = build_vocab([["x", "y"]], 20, num_codes=2, with_eoc=True)
    cfg = nmt.NmtConfig(hidden=4, embed=3, seed=3)
    return nmt.NmtModel(nmt.init_params(cfg, len(src), len(tgt), dtype=dtype), cfg, src, tgt)


def _code_model():
    src = build_vocab([["a", "b"]], 10)
    cfg = codemodel.CodeConfig(n=2, k=3, hidden=4, embed=3)
    return codemodel.CodeModel(codemodel.init_params(cfg, len(src)), cfg, src)


class TestCheckpoint:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_round_trip_bit_exact(self, dtype):
        model = _nmt_model(dtype)
        back = to_nmt_model(decode_checkpoint(encode_checkpoint(from_nmt_model(model))))
        assert back.params.dtype == dtype
        assert set(back.params.names()) == set(model.params.names())
        for name in model.params.names():
            assert back.params[name].tobytes() == model.params[name].tobytes()
        assert back.config == model.config
        assert back.src_vocab == model.src_vocab and back.tgt_vocab == model.tgt_vocab

    def test_save_load_save_identical(self, tmp_path):
        save_checkpoint(from_code_model(_code_model()), tmp_path / "a.ckpt")
        ckpt = load_checkpoint(tmp_path / "a.ckpt", kind="code-model")
        save_checkpoint(ckpt, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
        assert (tmp_path / "a.ckpt").read_bytes().startswith(MAGIC)
        assert to_code_model(ckpt).config == _code_model().config

    def test_truncated(self):
        data = encode_checkpoint(from_nmt_model(_nmt_model()))
        for cut in (3, len(MAGIC) + 4, len(MAGIC) + 20, len(data) - 1):
            with pytest.raises(FormatError):
                decode_checkpoint(data[:cut])

    def test_corrupted_payload(self):
        data = bytearray(encode_checkpoint(from_nmt_model(_nmt_model())))
        data[-1] ^= 0xFF
        with pytest.raises(FormatError, match="checksum"):
            decode_checkpoint(bytes(data))

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            decode_checkpoint(b"PLNMT2\n" + b"\0" * 16)

    def test_unknown_kind(self):
        with pytest.raises(FormatError):
            encode_checkpoint(Checkpoint("lm", _nmt_model().params, {}))

    def test_kind_mismatch(self, tmp_path):
        save_checkpoint(from_code_model(_code_model()), tmp_path / "c.ckpt")
        with pytest.raises(CompatibilityError):
            load_checkpoint(tmp_path / "c.ckpt", kind="nmt")
        with pytest.raises(CompatibilityError):
            to_nmt_model(load_checkpoint(tmp_path / "c.ckpt"))

    def test_vocab_mismatch(self, tmp_path):
        model = _nmt_model()
        save_checkpoint(from_nmt_model(model), tmp_path / "n.ckpt")
        load_checkpoint(tmp_path / "n.ckpt", src_vocab=model.src_vocab, tgt_vocab=model.tgt_vocab)
        other = build_vocab([["a", "b", "d"]], 20)
        with pytest.raises(CompatibilityError):
            load_checkpoint(tmp_path / "n.ckpt", src_vocab=other)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_loaded_model_translates_identically(self):
        model = _nmt_model(np.float64)
        back = to_nmt_model(decode_checkpoint(encode_checkpoint(from_nmt_model(model))))
        np.testing.assert_array_equal(model.greedy_batch([[3, 4]], 5),
                                      back.greedy_batch([[3, 4]], 5))
