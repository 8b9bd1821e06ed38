import numpy as np
import pytest

from smre.config import (Dims, TrainConfig, dumps_config, load_config, loads_config, save_config)
from smre.errors import ContractError
from smre.params import init_params, param_shapes

from conftest import SMALL_DIMS


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.sst.alpha, cfg.sst.m, cfg.lr) == (0.2, 0.2, 1e-4)
        assert (cfg.lambda1, cfg.lambda2, cfg.lambda3) == (1.0, 1.0, 1.0)
        assert cfg.dims.clips == 26 and cfg.min_count == 2

    def test_round_trip(self, tmp_path):
        cfg = TrainConfig().replace(**{"sst.y_signal": 0.8, "epochs": 3, "dims.d_h": 32})
        save_config(cfg, tmp_path / "c.cfg")
        assert load_config(tmp_path / "c.cfg") == cfg
        assert loads_config(dumps_config(cfg)) == cfg

    def test_partial_file_keeps_defaults(self):
        cfg = loads_config("epochs = 2\nsupport.theta_scale = 4.5\n")
        assert cfg.epochs == 2 and cfg.support.theta_scale == 4.5 and cfg.batch_size == 16

    def test_unknown_key(self):
        with pytest.raises(ContractError, match="sst.bogus"):
            loads_config("sst.bogus = 1\n")

    def test_malformed(self):
        with pytest.raises(ContractError):
            loads_config("this line has no delimiter\n")

    @pytest.mark.parametrize("change", [{"tel_prob": 1.5}, {"lambda2": -1.0}, {"epochs": 0},
                                        {"beam_size": 0}, {"lr": -1e-3}])
    def test_invalid_values(self, change):
        with pytest.raises(ContractError):
            TrainConfig().replace(**change)

    def test_support_active_needs_a_consumer(self):
        cfg = TrainConfig().replace(use_inter=False, use_intra=False, use_sup_cap=False)
        assert not cfg.support_active


class TestParams:
    def test_shapes(self):
        s = param_shapes(Dims(), 50)
        d = Dims()
        assert s["dec.att_W"] == (d.d_e + d.d_h + 2 * d.d_dec, 4 * d.d_dec)
        assert s["dec.lang_W"] == (d.d_h + 2 * d.d_dec, 4 * d.d_dec)
        assert s["dec.out_W"] == (d.d_dec, 50) and s["enc.W"] == (d.d_v, d.d_h)

    def test_seeded(self):
        a = init_params(SMALL_DIMS, 10, seed=3)
        assert a.digest() == init_params(SMALL_DIMS, 10, seed=3).digest()
        assert a.digest() != init_params(SMALL_DIMS, 10, seed=4).digest()

    def test_forget_bias(self):
        p = init_params(SMALL_DIMS, 10, seed=0)
        H = SMALL_DIMS.d_dec
        b = p["dec.att_b"].data
        assert (b[H:2 * H] == 1).all() and (b[:H] == 0).all() and (b[2 * H:] == 0).all()

    def test_copy_is_deep(self):
        p = init_params(SMALL_DIMS, 10, seed=0)
        q = p.copy(np.float64)
        q["enc.W"].data[0, 0] += 1
        assert q["enc.W"].dtype == np.float64 and p["enc.W"].data[0, 0] != q["enc.W"].data[0, 0]
