import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microtwin.field_synth import (
    CommandError,
    FieldCommand,
    FieldMode,
    FirmwareEmulator,
    GradientAxis,
    LoopClock,
    PwmFrame,
    SerialParseError,
    decode_command,
    encode_command,
    firmware_step,
    is_aliased,
    quantize_command,
    sample_rotating_field,
    sample_static_field,
    samples_per_period,
)


def roll(alpha=0.0, gamma=90.0, freq=1.0, amplitude=1.0, z_bias=0.0):
    return FieldCommand(FieldMode.ROTATING_ROLL, alpha, gamma, freq, amplitude,
                        z_bias=z_bias)


class TestRotatingField:
    def test_vertical_axis_at_t0(self):
        bx, by, bz = sample_rotating_field(roll(alpha=0, gamma=90), 0.0)
        assert abs(bx) < 1e-15 and abs(by) < 1e-15 and bz == pytest.approx(1.0)

    def test_inplane_at_t0(self):
        bx, by, bz = sample_rotating_field(roll(alpha=0, gamma=0), 0.0)
        assert (bx, by, bz) == pytest.approx((-1.0, 0.0, 0.0), abs=1e-15)

    def test_quarter_period(self):
        # frozen from symbolic evaluation at 2 pi f t = pi/2
        bx, by, bz = sample_rotating_field(roll(alpha=0, gamma=0), 0.25)
        assert (bx, by, bz) == pytest.approx((0.0, -1.0, 0.0), abs=1e-15)

    def test_unit_norm_over_random_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            cmd = roll(
                alpha=rng.uniform(0, 360),
                gamma=rng.uniform(0, 180),
                freq=rng.uniform(0, 250 - 1e-9),
            )
            bx, by, bz = sample_rotating_field(cmd, rng.uniform(0, 10))
            assert abs(bx * bx + by * by + bz * bz - 1.0) < 1e-12

    @given(
        alpha=st.floats(0, 359.999),
        gamma=st.floats(0, 180),
        freq=st.floats(0.01, 249.9),
        t=st.floats(0, 100),
    )
    @settings(max_examples=200)
    def test_periodicity(self, alpha, gamma, freq, t):
        cmd = roll(alpha=alpha, gamma=gamma, freq=freq)
        a = sample_rotating_field(cmd, t)
        b = sample_rotating_field(cmd, t + 1.0 / freq)
        assert a == pytest.approx(b, abs=1e-9)

    def test_gamma_90_rotation_plane_contains_z(self):
        cmd = roll(alpha=123.0, gamma=90.0, freq=5.0)
        bz = [sample_rotating_field(cmd, t)[2] for t in np.linspace(0, 0.2, 400)]
        assert max(bz) == pytest.approx(1.0, abs=1e-4)

    def test_gamma_0_is_inplane(self):
        cmd = roll(alpha=77.0, gamma=0.0, freq=5.0)
        for t in np.linspace(0, 1, 100):
            assert sample_rotating_field(cmd, t)[2] == 0.0

    def test_loop_variant_flips_documented_signs(self):
        cmd = roll(alpha=0, gamma=0, freq=1)
        assert sample_rotating_field(cmd, 0.0, variant="equation")[0] == pytest.approx(-1.0)
        assert sample_rotating_field(cmd, 0.0, variant="loop")[0] == pytest.approx(1.0)
        # the loop variant is still a unit vector
        bx, by, bz = sample_rotating_field(roll(alpha=30, gamma=45, freq=3), 0.13,
                                           variant="loop")
        assert bx * bx + by * by + bz * bz == pytest.approx(1.0, abs=1e-12)

    def test_zero_freq_is_frozen_phase(self):
        cmd = roll(alpha=10, gamma=30, freq=0.0)
        assert sample_rotating_field(cmd, 0.0) == sample_rotating_field(cmd, 5.0)

    def test_rejects_out_of_range(self):
        with pytest.raises(CommandError):
            sample_rotating_field(roll(alpha=400), 0.0)
        with pytest.raises(CommandError):
            sample_rotating_field(roll(gamma=181), 0.0)
        with pytest.raises(CommandError):
            sample_rotating_field(roll(freq=250.0), 0.0)
        # just inside the cap is fine
        sample_rotating_field(roll(freq=249.9999), 0.0)


class TestStaticField:
    def test_off(self):
        assert sample_static_field(FieldCommand.off()) == (0.0, 0.0, 0.0)

    def test_uniform_x(self):
        cmd = FieldCommand(FieldMode.UNIFORM, alpha=0, gamma=90, amplitude=1.0)
        assert sample_static_field(cmd) == pytest.approx((1.0, 0.0, 0.0))

    def test_gradient_single_coil(self):
        cmd = FieldCommand(FieldMode.GRADIENT, amplitude=0.5,
                           gradient_axis=GradientAxis.POS_X)
        assert sample_static_field(cmd) == (0.5, 0.0, 0.0)
        clock = LoopClock()
        frame = firmware_step(clock, cmd)
        assert frame.single_coil
        assert frame.duty_x == 0.5 and frame.duty_y == 0.0 and frame.duty_z == 0.0

    def test_gradient_requires_axis(self):
        with pytest.raises(CommandError):
            FieldCommand(FieldMode.GRADIENT).validate()


class TestFirmwareStep:
    def test_full_period_in_500_samples_at_1hz(self):
        clock = LoopClock()
        cmd = roll(alpha=0, gamma=0, freq=1.0)
        duties = [firmware_step(clock, cmd).duty_x for _ in range(500)]
        # duty_x = -cos(2 pi t): one full period sampled at t = k/500, k=1..500
        expected = [-math.cos(2 * math.pi * k / 500) for k in range(1, 501)]
        assert duties == pytest.approx(expected, abs=1e-12)

    def test_50_samples_per_period_at_10hz(self):
        clock = LoopClock()
        cmd = roll(alpha=0, gamma=0, freq=10.0)
        duties = [firmware_step(clock, cmd).duty_x for _ in range(100)]
        assert duties[:50] == pytest.approx(duties[50:], abs=1e-9)

    def test_off_is_all_zero(self):
        clock = LoopClock()
        for _ in range(20):
            frame = firmware_step(clock, FieldCommand.off())
            assert frame.as_tuple() == (0.0, 0.0, 0.0)

    def test_duty_sign_matches_waveform_sign(self):
        clock = LoopClock()
        cmd = roll(alpha=33.0, gamma=0.0, freq=7.0, amplitude=0.8)
        flips = 0
        prev = None
        for _ in range(500):
            frame = firmware_step(clock, cmd)
            t = clock.t
            # independent evaluation of the same closed form
            a, w = math.radians(33.0), 2 * math.pi * 7.0 * t
            wave = -math.cos(a) * math.cos(w) + math.sin(a) * math.sin(w)
            assert math.copysign(1, frame.duty_x) == math.copysign(1, wave)
            if prev is not None and math.copysign(1, frame.duty_x) != prev:
                flips += 1
            prev = math.copysign(1, frame.duty_x)
        assert flips == 14  # two polarity flips per period, 7 periods

    def test_amplitude_scaling_and_z_bias_clamp(self):
        clock = LoopClock()
        cmd = roll(alpha=0, gamma=90, freq=0.0, amplitude=1.0, z_bias=0.5)
        frame = firmware_step(clock, cmd)
        # unit bz = 1 at phase 0, +0.5 bias saturates at 1
        assert frame.duty_z == 1.0
        cmd2 = roll(alpha=0, gamma=90, freq=0.0, amplitude=0.3, z_bias=0.5)
        frame2 = firmware_step(LoopClock(), cmd2)
        assert frame2.duty_z == pytest.approx(0.8)


class TestLoopClock:
    def test_tick_accounting_is_exact(self):
        clock = LoopClock(500.0)
        for _ in range(12_345):
            clock.tick()
        assert clock.t == clock.steps / 500.0
        assert abs(clock.t - 12_345 / 500.0) < 1e-12

    def test_monotone(self):
        clock = LoopClock()
        last = clock.t
        for _ in range(100):
            now = clock.tick()
            assert now > last
            last = now


class TestSamplesPerPeriod:
    @pytest.mark.parametrize(
        "f,count,aliased",
        [(1.0, 500.0, False), (10.0, 50.0, False), (250.0, 2.0, True)],
    )
    def test_counts(self, f, count, aliased):
        assert samples_per_period(500.0, f) == pytest.approx(count)
        assert is_aliased(500.0, f) is aliased

    def test_167hz_updates_every_third_of_period(self):
        assert samples_per_period(500.0, 167.0) == pytest.approx(2.994, abs=1e-3)
        assert not is_aliased(500.0, 167.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            samples_per_period(500.0, 0.0)
        with pytest.raises(ValueError):
            samples_per_period(500.0, -1.0)


class TestCommandChannel:
    def test_one_command_consumed_per_tick(self):
        fw = FirmwareEmulator()
        fw.post(roll(alpha=10))
        fw.post(roll(alpha=20))
        fw.step()
        assert fw.active.alpha == 10
        fw.step()
        assert fw.active.alpha == 20

    def test_rejected_command_never_applies(self):
        fw = FirmwareEmulator()
        fw.post(roll(alpha=10))
        fw.step()
        with pytest.raises(CommandError):
            fw.post(roll(alpha=999))
        fw.step()
        assert fw.active.alpha == 10


def command_strategy():
    dec4 = lambda lo, hi: st.integers(int(lo * 10_000), int(hi * 10_000)).map(
        lambda n: n / 10_000.0
    )
    return st.builds(
        FieldCommand,
        mode=st.sampled_from(list(FieldMode)),
        alpha=dec4(0, 359.9999),
        gamma=dec4(0, 180),
        freq=dec4(0, 249.9999),
        amplitude=dec4(0, 1),
        gradient_axis=st.sampled_from(list(GradientAxis)),
        z_bias=dec4(-1, 1),
    )


class TestSerialCodec:
    def test_off_roundtrips(self):
        cmd = FieldCommand.off()
        assert decode_command(encode_command(cmd)) == cmd

    def test_precision_boundary_survives(self):
        cmd = roll(alpha=359.9999)
        assert decode_command(encode_command(cmd)).alpha == 359.9999

    @given(command_strategy())
    @settings(max_examples=300)
    def test_roundtrip_fuzz(self, cmd):
        assert decode_command(encode_command(cmd)) == quantize_command(cmd)

    def test_line_shape(self):
        line = encode_command(roll(alpha=1.5, gamma=90, freq=10))
        assert line.startswith("CMD RotatingRoll 1.5000 90.0000 10.0000")
        assert line.endswith("\n")

    @pytest.mark.parametrize(
        "line",
        [
            "NOPE RotatingRoll 0.0000 90.0000 1.0000 1.0000 - 0.0000\n",
            "CMD SpinningTop 0.0000 90.0000 1.0000 1.0000 - 0.0000\n",
            "CMD RotatingRoll zero 90.0000 1.0000 1.0000 - 0.0000\n",
            "CMD RotatingRoll 0.0000 90.0000 1.0000 1.0000 +Q 0.0000\n",
            "CMD RotatingRoll 0.0000 90.0000\n",
            "CMD RotatingRoll 400.0000 90.0000 1.0000 1.0000 - 0.0000\n",
        ],
    )
    def test_malformed_lines_raise_with_offset(self, line):
        with pytest.raises(SerialParseError) as err:
            decode_command(line)
        assert err.value.offset >= 0

    def test_parse_error_offset_points_at_field(self):
        with pytest.raises(SerialParseError) as err:
            decode_command("CMD RotatingRoll bad 90.0000 1.0000 1.0000 - 0.0000\n")
        assert err.value.offset == len("CMD RotatingRoll ")


class TestPwmFrame:
    def test_duties_bounded(self):
        clock = LoopClock()
        rng = np.random.default_rng(2)
        for _ in range(200):
            cmd = roll(
                alpha=rng.uniform(0, 360),
                gamma=rng.uniform(0, 180),
                freq=rng.uniform(0, 249),
                amplitude=rng.uniform(0, 1),
                z_bias=rng.uniform(-1, 1),
            )
            frame = firmware_step(clock, cmd)
            for d in frame.as_tuple():
                assert -1.0 <= d <= 1.0
