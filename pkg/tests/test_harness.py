"""Config parsing, CLI behavior, CSV schemas, and reproducibility of the
experiment drivers at tiny scale."""

import csv
import math
import textwrap

import numpy as np
import pytest

import isacsim.experiments as ex
from isacsim.channel import ScenarioConfig
from isacsim.cli import main
from isacsim.config import (BerOptions, ConfigError, EvalOptions,
                            ExperimentConfig, PaprOptions, RateOptions,
                            SenseOptions, TrainOptions, load_config)
from isacsim.waveform import FrameConfig

TINY_FRAME = textwrap.dedent("""\
    [frame]
    n = 16
    block_size = 8
    n_blocks = 4
    ref_spacing = 4
    guard = cp
    n_cp = 4
    """)


def write_ini(tmp_path, body, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return str(path)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def tiny_cfg(**kwargs):
    frame = kwargs.pop("frame", FrameConfig(n=16, block_size=8, n_blocks=4,
                                            ref_spacing=4, guard="cp", n_cp=4))
    scenario = kwargs.pop("scenario", ScenarioConfig(kind="multipath-comm",
                                                     n_nlos=2))
    return ExperimentConfig(frame=frame, scenario=scenario, **kwargs)


# ------------------------------------------------------------------ config ---

class TestLoadConfig:
    def test_full_round_trip(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent("""\
            [channel]
            scenario = multipath-comm
            n_nlos = 3
            with_doppler = true
            max_speed = 12.5

            [ber]
            waveforms = si, ofdm
            methods = zf, mmse
            snr_db = 0, 5, 10
            target_errors = 20
            max_bits = 100000

            [run]
            seed = 7
            out = results/x.csv
            threads = 2
            """))
        cfg = load_config(ini, "ber")
        assert cfg.kind == "ber"
        assert cfg.frame.n == 16 and cfg.frame.block_size == 8
        assert cfg.scenario.kind == "multipath-comm"
        assert cfg.scenario.n_nlos == 3
        assert cfg.scenario.with_doppler is True
        assert cfg.scenario.max_speed == 12.5
        assert cfg.ber.waveforms == ("si", "ofdm")
        assert cfg.ber.methods == ("zf", "mmse")
        assert cfg.ber.snr_db == (0.0, 5.0, 10.0)
        assert cfg.seed == 7 and cfg.out == "results/x.csv" and cfg.threads == 2

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/definitely/not/here.ini", "papr")

    def test_missing_frame_section(self, tmp_path):
        ini = write_ini(tmp_path, "[papr]\nblocks = 10\n")
        with pytest.raises(ConfigError, match=r"\[frame\]"):
            load_config(ini, "papr")

    def test_unknown_section(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME + "[mystery]\nkey = 1\n")
        with pytest.raises(ConfigError, match="mystery"):
            load_config(ini, "papr")

    def test_unknown_key(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME + "[papr]\nbogus = 3\n")
        with pytest.raises(ConfigError, match="bogus"):
            load_config(ini, "papr")

    def test_frame_error_is_config_error(self, tmp_path):
        bad = TINY_FRAME.replace("n_cp = 4", "n_cp = 99")
        ini = write_ini(tmp_path, bad)
        with pytest.raises(ConfigError, match="n_cp"):
            load_config(ini, "papr")

    def test_unknown_kind(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME)
        with pytest.raises(ConfigError, match="kind"):
            load_config(ini, "frobnicate")

    def test_nn_method_needs_checkpoint(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME +
                        "[ber]\nmethods = nn-level2\nsnr_db = 10\n")
        with pytest.raises(ConfigError, match="checkpoint"):
            load_config(ini, "ber")

    def test_dual_sweep_rejected(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME +
                        "[ber]\nsnr_db = 0, 10\npn_variance = 1e-4, 1e-2\n")
        with pytest.raises(ConfigError, match="sweep"):
            load_config(ini, "ber")

    def test_train_pn_range_validation(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent("""\
            [train]
            pn_low = 0
            pn_high = 1e-2
            checkpoint = r.ckpt
            """))
        with pytest.raises(ConfigError, match="pn_low"):
            load_config(ini, "train")


# --------------------------------------------------------------------- cli ---

class TestCli:
    def test_missing_config_exits_2(self, capsys):
        assert main(["papr", "--config", "/nope.ini", "--out", "/tmp/x.csv"]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("error: config:")

    def test_no_out_path_exits_2(self, tmp_path, capsys):
        ini = write_ini(tmp_path, TINY_FRAME + "[papr]\nblocks = 50\n")
        assert main(["papr", "--config", ini]) == 2
        assert "out" in capsys.readouterr().err

    def test_papr_run_writes_csv(self, tmp_path, capsys):
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent("""\
            [papr]
            blocks = 200
            threshold_min_db = 4
            threshold_max_db = 6
            """))
        out = tmp_path / "papr.csv"
        assert main(["papr", "--config", ini, "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows and set(rows[0]) == {"waveform", "n", "threshold_db", "ccdf"}
        assert {r["waveform"] for r in rows} == {"si-cp", "si-fgi", "ofdm"}

    def test_oversample_note_printed(self, tmp_path, capsys):
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent("""\
            [papr]
            blocks = 64
            oversample = 4
            threshold_min_db = 4
            threshold_max_db = 5
            """))
        out = tmp_path / "papr.csv"
        assert main(["papr", "--config", ini, "--out", str(out)]) == 0
        assert "oversampled" in capsys.readouterr().out

    def test_seed_override_changes_output(self, tmp_path):
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent("""\
            [papr]
            blocks = 300
            threshold_min_db = 4
            threshold_max_db = 8

            [run]
            seed = 1
            """))
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        assert main(["papr", "--config", ini, "--out", str(a)]) == 0
        assert main(["papr", "--config", ini, "--out", str(b)]) == 0
        assert main(["papr", "--config", ini, "--out", str(c), "--seed", "2"]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()

    def test_eval_missing_checkpoint_exits_2(self, tmp_path, capsys):
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent("""\
            [eval]
            checkpoint = /no/such/file.ckpt
            n_frames = 2
            """))
        assert main(["eval", "--config", ini, "--out", str(tmp_path / "e.csv")]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("error:")


# -------------------------------------------------------------------- papr ---

class TestPapr:
    def test_ccdf_is_monotone_nonincreasing(self):
        cfg = tiny_cfg(kind="papr", seed=3,
                       papr=PaprOptions(blocks=500, threshold_min_db=4,
                                        threshold_max_db=8))
        _, rows = ex.run_papr(cfg)
        for waveform in ("si-cp", "si-fgi", "ofdm"):
            curve = [r["ccdf"] for r in rows if r["waveform"] == waveform]
            assert all(a >= b for a, b in zip(curve, curve[1:]))

    def test_ccdf_crossing_interpolates(self):
        rows = [{"waveform": "w", "threshold_db": 5.0, "ccdf": 1e-1},
                {"waveform": "w", "threshold_db": 6.0, "ccdf": 1e-3}]
        # log-linear: 1e-2 sits exactly halfway
        assert ex.ccdf_crossing(rows, "w", 1e-2) == pytest.approx(5.5)
        with pytest.raises(ValueError):
            ex.ccdf_crossing(rows, "w", 1e-5)


# --------------------------------------------------------------------- ber ---

class TestBer:
    def test_ofdm_zf_mmse_rows_identical(self):
        cfg = tiny_cfg(kind="ber", seed=5,
                       ber=BerOptions(waveforms=("ofdm",), methods=("zf", "mmse"),
                                      snr_db=(8.0,), target_errors=20,
                                      max_bits=20000))
        _, rows = ex.run_ber(cfg)
        zf = next(r for r in rows if r["method"] == "zf")
        mmse = next(r for r in rows if r["method"] == "mmse")
        assert zf["bit_errors"] == mmse["bit_errors"]
        assert zf["ber"] == mmse["ber"]
        assert zf["bits"] == mmse["bits"] > 0

    def test_stops_on_error_target(self):
        cfg = tiny_cfg(kind="ber", seed=6,
                       ber=BerOptions(waveforms=("si",), methods=("zf",),
                                      snr_db=(0.0,), target_errors=5,
                                      max_bits=10_000_000))
        _, rows = ex.run_ber(cfg)
        assert rows[0]["bit_errors"] >= 5
        assert rows[0]["bits"] < 10_000_000

    def test_stops_on_bit_budget(self):
        cfg = tiny_cfg(kind="ber", seed=6,
                       ber=BerOptions(waveforms=("si",), methods=("zf",),
                                      snr_db=(60.0,), target_errors=10**9,
                                      max_bits=3000))
        _, rows = ex.run_ber(cfg)
        frame_bits = 2 * 8 * 3  # qpsk * block symbols * data blocks
        assert rows[0]["bits"] == math.ceil(3000 / frame_bits) * frame_bits

    def test_stderr_matches_binomial(self):
        cfg = tiny_cfg(kind="ber", seed=7,
                       ber=BerOptions(waveforms=("si",), methods=("zf",),
                                      snr_db=(5.0,), target_errors=30,
                                      max_bits=50000))
        _, rows = ex.run_ber(cfg)
        r = rows[0]
        assert r["ber_stderr"] == pytest.approx(
            math.sqrt(r["ber"] * (1 - r["ber"]) / r["bits"]))

    def test_pn_sweep_fills_sigma_column(self):
        cfg = tiny_cfg(kind="ber", seed=8,
                       ber=BerOptions(waveforms=("si",), methods=("mmse",),
                                      snr_db=(15.0,),
                                      pn_variance=(1e-4, 1e-2),
                                      target_errors=10, max_bits=10000))
        _, rows = ex.run_ber(cfg)
        assert [r["sigma_theta2"] for r in rows] == [1e-4, 1e-2]
        # heavier phase noise cannot decode better
        assert rows[1]["ber"] >= rows[0]["ber"]

    def test_threads_do_not_change_rows(self):
        opts = BerOptions(waveforms=("si",), methods=("zf", "mmse"),
                          snr_db=(6.0,), target_errors=15, max_bits=8000)
        _, rows1 = ex.run_ber(tiny_cfg(kind="ber", seed=9, ber=opts))
        _, rows2 = ex.run_ber(tiny_cfg(kind="ber", seed=9, threads=2, ber=opts))
        assert rows1 == rows2


# -------------------------------------------------------------------- rate ---

class TestRate:
    def test_hand_model_values(self):
        frame = FrameConfig(n=256, block_size=128, n_blocks=2, ref_spacing=2,
                            guard="cp", n_cp=64)
        cfg = tiny_cfg(kind="rate", frame=frame, rate=RateOptions())
        _, rows = ex.run_rate(cfg)
        base = 30e9 * math.log2(1 + 10.0 ** 2.0)
        cp = [r["rate_bps"] for r in rows if r["scheme"] == "cp"]
        fgi = [r["rate_bps"] for r in rows if r["scheme"] == "fgi"]
        assert len(cp) == len(fgi) == 64
        assert all(v == pytest.approx(base * (1 - 0.032 / 0.162)) for v in cp)
        # uniform-draw mean of the staircase: guard cost k/256 on cell k
        want_mean = base * (1 - (sum(range(1, 65)) / 64) / 256)
        assert np.mean(fgi) == pytest.approx(want_mean)
        assert np.mean(fgi) == pytest.approx(174.39e9, rel=1e-3)
        assert np.mean(fgi) - cp[0] == pytest.approx(14.1e9, rel=0.01)

    def test_delay_spread_spans_quarter_symbol(self):
        frame = FrameConfig(n=64, block_size=32, n_blocks=2, ref_spacing=2,
                            guard="cp", n_cp=16)
        cfg = tiny_cfg(kind="rate", frame=frame,
                       rate=RateOptions(t_sym_s=1e-7, t_cp_s=2.5e-8))
        _, rows = ex.run_rate(cfg)
        ds = sorted({r["delay_spread_s"] for r in rows})
        assert ds[0] == pytest.approx(1e-7 / 64)
        assert ds[-1] == pytest.approx(2.5e-8)
        # fgi rate never falls below the worst guard cost within the sweep
        fgi = [r["rate_bps"] for r in rows if r["scheme"] == "fgi"]
        base = 30e9 * math.log2(1 + 100.0)
        assert min(fgi) == pytest.approx(base * (1 - 16 / 64))


# ------------------------------------------------------------------- sense ---

SENSE_FRAME = FrameConfig(n=32, block_size=32, n_blocks=1, ref_spacing=1,
                          guard="cp", n_cp=8)


class TestSense:
    def test_schema_and_crlb_column(self):
        cfg = tiny_cfg(kind="sense", seed=12, frame=SENSE_FRAME,
                       scenario=ScenarioConfig(kind="single-target"),
                       sense=SenseOptions(axis="range", snr_db=(10.0, 20.0),
                                          trials=25))
        cols, rows = ex.run_sense(cfg)
        assert cols == ["estimator", "snr_db", "rmse", "trials", "crlb_rmse",
                        "rmse_stderr"]
        assert len(rows) == 2
        snr10, snr20 = rows
        assert snr10["trials"] == snr20["trials"] == 25
        # closed-form bound for this frame: unit-power single path at N = L
        want = math.sqrt(ex.crlb_range_var(10.0, 32, 1, 7.68e6))
        assert snr10["crlb_rmse"] == pytest.approx(want)
        assert snr20["crlb_rmse"] == pytest.approx(want / math.sqrt(10))
        assert snr20["rmse"] <= snr10["rmse"]

    def test_occupancy_scales_crlb_snr(self):
        frame = FrameConfig(n=4, block_size=1, n_blocks=40, ref_spacing=10,
                            guard="cp", n_cp=1, subcarrier_spacing=1.92e6)
        cfg = tiny_cfg(kind="sense", seed=13, frame=frame,
                       scenario=ScenarioConfig(kind="single-target",
                                               with_doppler=True,
                                               max_speed=20.0),
                       sense=SenseOptions(axis="velocity", snr_db=(10.0,),
                                          trials=10))
        _, rows = ex.run_sense(cfg)
        stride = 10 * frame.t_block
        # one of four bins occupied -> per-bin snr is 4x the sample snr
        want = math.sqrt(ex.crlb_velocity_var(40.0, 1, 4, stride, 0.3e12))
        assert rows[0]["crlb_rmse"] == pytest.approx(want)

    def test_reproducible_and_thread_invariant(self):
        opts = SenseOptions(axis="range", snr_db=(15.0,), trials=12)
        scen = ScenarioConfig(kind="single-target")
        _, a = ex.run_sense(tiny_cfg(kind="sense", seed=14, frame=SENSE_FRAME,
                                     scenario=scen, sense=opts))
        _, b = ex.run_sense(tiny_cfg(kind="sense", seed=14, frame=SENSE_FRAME,
                                     scenario=scen, sense=opts))
        _, c = ex.run_sense(tiny_cfg(kind="sense", seed=14, threads=2,
                                     frame=SENSE_FRAME, scenario=scen,
                                     sense=opts))
        assert a == b == c


# ------------------------------------------------------------ train / eval ---

class TestTrainEval:
    def test_cli_train_then_eval(self, tmp_path, capsys):
        ck = tmp_path / "r.ckpt"
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent(f"""\
            [channel]
            scenario = multipath-comm
            n_nlos = 2

            [train]
            receiver = block
            n_frames = 120
            snr_db = 15
            epochs = 2
            batch_size = 64
            checkpoint = {ck}
            """))
        hist = tmp_path / "hist.csv"
        assert main(["train", "--config", ini, "--out", str(hist)]) == 0
        rows = read_rows(hist)
        assert [r["epoch"] for r in rows] == ["0", "1", "2"]
        assert set(rows[0]) == {"stage", "epoch", "train_loss_c",
                                "train_loss_s", "test_loss_c", "test_loss_s"}
        assert ck.exists()

        eini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent(f"""\
            [channel]
            scenario = multipath-comm
            n_nlos = 2

            [eval]
            checkpoint = {ck}
            n_frames = 10
            snr_db = 15
            """), name="eval.ini")
        out = tmp_path / "metrics.csv"
        assert main(["eval", "--config", eini, "--out", str(out)]) == 0
        metrics = {r["metric"] for r in read_rows(out)}
        assert metrics == {"ber", "range_rmse_m"}

    def test_cli_two_level_train_then_eval(self, tmp_path):
        """The cascade trains its tracker stage first, then the equalizer on
        the tracker's channel predictions; eval adds the velocity metric."""
        ck = tmp_path / "cascade.ckpt"
        ini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent(f"""\
            [channel]
            scenario = multipath-comm
            n_nlos = 2
            with_doppler = true

            [train]
            receiver = two-level
            n_frames = 120
            snr_db = 15
            epochs = 2
            batch_size = 64
            checkpoint = {ck}
            """))
        hist = tmp_path / "hist.csv"
        assert main(["train", "--config", ini, "--out", str(hist)]) == 0
        rows = read_rows(hist)
        assert [r["stage"] for r in rows] == ["tracker"] * 3 + ["equalizer"] * 3
        assert ck.exists()

        eini = write_ini(tmp_path, TINY_FRAME + textwrap.dedent(f"""\
            [channel]
            scenario = multipath-comm
            n_nlos = 2
            with_doppler = true

            [eval]
            checkpoint = {ck}
            n_frames = 10
            snr_db = 15
            """), name="eval.ini")
        out = tmp_path / "metrics.csv"
        assert main(["eval", "--config", eini, "--out", str(out)]) == 0
        metrics = {r["metric"] for r in read_rows(out)}
        assert metrics == {"ber", "range_rmse_m", "velocity_rmse_mps"}

    def test_history_reproducible(self, tmp_path):
        def run(seed):
            cfg = tiny_cfg(kind="train", seed=seed,
                           train=TrainOptions(receiver="block", n_frames=100,
                                              snr_db=(15.0,), epochs=2,
                                              batch_size=64,
                                              checkpoint=str(tmp_path / "c.ckpt")))
            return ex.run_train(cfg)[1]

        assert run(17) == run(17)
        assert run(17) != run(18)

    def test_decay_stage_extends_epochs(self, tmp_path):
        cfg = tiny_cfg(kind="train", seed=19,
                       train=TrainOptions(receiver="block", n_frames=100,
                                          snr_db=(15.0,), epochs=2,
                                          decay_epochs=2, decay_lr=1e-4,
                                          batch_size=64,
                                          checkpoint=str(tmp_path / "d.ckpt")))
        _, rows = ex.run_train(cfg)
        assert [r["epoch"] for r in rows] == [0, 1, 2, 3, 4]

    def test_unknown_receiver_kind(self, tmp_path):
        cfg = tiny_cfg(kind="train", seed=20,
                       train=TrainOptions(receiver="block", n_frames=50,
                                          snr_db=(15.0,), epochs=0,
                                          checkpoint=str(tmp_path / "x.ckpt")))
        cfg.train.receiver = "cascade"
        with pytest.raises(ConfigError, match="receiver"):
            ex.run_train(cfg)

    def test_eval_pn_column(self, tmp_path):
        ck = str(tmp_path / "p.ckpt")
        ex.run_train(tiny_cfg(kind="train", seed=21,
                              train=TrainOptions(receiver="block", n_frames=80,
                                                 snr_db=(15.0,), epochs=1,
                                                 batch_size=64, checkpoint=ck)))
        cfg = tiny_cfg(kind="eval", seed=22,
                       eval=EvalOptions(checkpoint=ck, n_frames=5,
                                        snr_db=(15.0,), pn_variance=1e-3))
        _, rows = ex.run_eval(cfg)
        assert rows and all(r["pn_variance"] == 1e-3 for r in rows)
