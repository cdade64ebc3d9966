"""Tests for Gray coding, the nonlinear angle remap, and payload round-trips."""

import math

import numpy as np
import pytest

from oracles import hamming
from reflectag import codec
from reflectag.geometry import MicrostructureAngle, circle_intersection_angle


class TestGrayCode:
    def test_two_bit_table(self):
        """Codewords 00,01,10,11 decode to 0,1,3,2."""
        assert [codec.gray_decode(b) for b in ("00", "01", "10", "11")] == [0, 1, 3, 2]
        assert [codec.gray_encode(v, 2) for v in (0, 1, 3, 2)] == ["00", "01", "10", "11"]

    def test_zero_encodes_to_zeros(self):
        for m in (1, 3, 8):
            assert codec.gray_encode(0, m) == "0" * m

    def test_four_in_three_bits(self):
        # oracle: v XOR (v >> 1) = 4 ^ 2 = 6
        assert codec.gray_encode(4, 3) == "110"

    def test_exhaustive_roundtrip_and_adjacency(self):
        for m in range(1, 9):
            codewords = [codec.gray_encode(v, m) for v in range(2**m)]
            assert len(set(codewords)) == 2**m
            for v, word in enumerate(codewords):
                assert codec.gray_decode(word) == v
                if v:
                    assert hamming(word, codewords[v - 1]) == 1

    def test_range_errors(self):
        with pytest.raises(ValueError):
            codec.gray_encode(8, 3)
        with pytest.raises(ValueError):
            codec.gray_encode(-1, 3)
        with pytest.raises(ValueError):
            codec.gray_decode("")


class TestNonlinearMap:
    def test_forward_of_inverse_is_affine(self, rig_geometry, rig_map):
        """g(M(u)) must interpolate the psi span linearly in u."""
        span = rig_map.psi_max - rig_map.psi_min
        for u in np.linspace(0.0, 180.0, 37):
            target = rig_map.psi_min + u / 180.0 * span
            assert abs(rig_map.psi_for_delta(rig_map.delta_for_input(u)) - target) < 1e-6

    def test_roundtrip_through_the_table_domain(self, rig_map):
        for delta in np.linspace(rig_map.deltas[0], rig_map.deltas[-1], 101):
            u = rig_map.input_for_delta(delta)
            assert abs(rig_map.delta_for_input(u) - delta) < 1e-6

    def test_mapped_states_land_on_uniform_crossings(self, rig_geometry, rig_map):
        """The 8 mapped angles must split the crossing span evenly (0.5%)."""
        psis = np.sort(
            [
                circle_intersection_angle(rig_geometry, MicrostructureAngle.from_delta(d))
                for d in rig_map.mapped_deltas(3)
            ]
        )
        gaps = np.diff(psis)
        assert gaps.max() / gaps.min() <= 1.005

    def test_uniform_angles_crowd_without_the_map(self, rig_geometry):
        """Control: evenly spaced bead angles crowd their crossings badly."""
        psis = np.sort(
            [
                circle_intersection_angle(
                    rig_geometry, MicrostructureAngle.from_delta(k / 8 * math.pi)
                )
                for k in range(8)
            ]
        )
        gaps = np.diff(psis)
        assert gaps.max() / gaps.min() > 1.5

    def test_monotone_table_required(self, rig_geometry):
        deltas = np.linspace(0.2, 1.0, 16)
        psis = np.sin(deltas * 9.0)  # wiggles
        with pytest.raises(codec.MonotonicityError):
            codec.NonlinearMap(rig_geometry, deltas, psis)

    def test_cache_roundtrip(self, rig_geometry, rig_map, tmp_path):
        path = tmp_path / "table.atmap"
        rig_map.save(path)
        assert path.read_bytes()[:6] == b"ATMAP1"
        loaded = codec.NonlinearMap.load(path, rig_geometry)
        assert np.array_equal(loaded.deltas, rig_map.deltas)
        assert np.array_equal(loaded.psis, rig_map.psis)
        assert loaded.table_hash == rig_map.table_hash

    def test_cache_rejects_wrong_geometry(self, rig_geometry, rig_map, tmp_path):
        from reflectag.geometry import DetectionGeometry

        path = tmp_path / "table.atmap"
        rig_map.save(path)
        other = DetectionGeometry(
            alpha=math.radians(55.0), d=65.0, circle_radius=15.0, sensor_count=16
        )
        with pytest.raises(ValueError, match="does not match"):
            codec.NonlinearMap.load(path, other)

    def test_cache_rejects_garbage(self, rig_geometry, tmp_path):
        path = tmp_path / "bad.atmap"
        path.write_bytes(b"NOTAMAP")
        with pytest.raises(ValueError, match="magic"):
            codec.NonlinearMap.load(path, rig_geometry)
        path.write_bytes(b"ATMAP1" + b"\x10" + b"\x00" * 7 + b"\x00" * 8)
        with pytest.raises(ValueError, match="truncated"):
            codec.NonlinearMap.load(path, rig_geometry)


class TestEncodeDecode:
    def test_all_zero_payload_uses_one_angle(self, rig_map):
        cfg = codec.CodecConfig(17, 3)
        codes = codec.encode("0" * 51, cfg, rig_map)
        assert len(codes) == 17
        first = codes[0].angle.delta
        assert all(math.isclose(c.angle.delta, first) for c in codes)
        assert math.isclose(first, rig_map.delta_for_input(0.0))

    def test_default_capacity_is_51_bits(self, rig_map):
        cfg = codec.CodecConfig(17, 3)
        assert cfg.capacity == 51
        rng = np.random.default_rng(8)
        payload = "".join(str(b) for b in rng.integers(0, 2, 51))
        assert len(codec.encode(payload, cfg, rig_map)) == 17

    def test_roundtrip_many_random_payloads(self, rig_map):
        cfg = codec.CodecConfig(17, 3)
        rng = np.random.default_rng(123)
        payloads = rng.integers(0, 2, size=(10_000, 51))
        for row in payloads:
            payload = "".join("1" if b else "0" for b in row)
            codes = codec.encode(payload, cfg, rig_map)
            assert codec.decode([c.value for c in codes], cfg) == payload

    def test_roundtrip_across_formats(self, rig_map):
        rng = np.random.default_rng(7)
        for n in range(16, 22):
            for m in range(1, 5):
                cfg = codec.CodecConfig(n, m)
                payload = "".join(str(b) for b in rng.integers(0, 2, cfg.capacity))
                codes = codec.encode(payload, cfg, rig_map)
                assert codec.decode([c.value for c in codes], cfg) == payload

    def test_decode_paper_table(self):
        cfg = codec.CodecConfig(4, 2)
        assert codec.decode([0, 1, 3, 2], cfg) == "00011011"

    def test_length_and_count_errors(self, rig_map):
        cfg = codec.CodecConfig(17, 3)
        with pytest.raises(ValueError, match="length"):
            codec.encode("0" * 50, cfg, rig_map)
        with pytest.raises(ValueError):
            codec.decode([0] * 16, cfg)
        with pytest.raises(ValueError):
            codec.decode([8] + [0] * 16, cfg)  # state out of range for m=3

    def test_binary_mode_skips_gray(self, rig_map):
        cfg = codec.CodecConfig(2, 3, use_gray=False)
        codes = codec.encode("011100", cfg, rig_map)
        assert [c.value for c in codes] == [0b011, 0b100]


class TestAdjacentConfusionDamage:
    def test_gray_loses_one_bit_binary_up_to_m(self):
        """A +-1 state error costs exactly 1 bit with Gray, 1..m bits without."""
        m = 3
        for v in range(2**m):
            for w in (v - 1, v + 1):
                if not 0 <= w < 2**m:
                    continue
                gray_flips = hamming(codec.gray_encode(v, m), codec.gray_encode(w, m))
                bin_flips = hamming(format(v, "03b"), format(w, "03b"))
                assert gray_flips == 1
                assert 1 <= bin_flips <= m

    def test_the_three_to_four_example(self):
        """Mistaking state 3 for 4: binary 011 -> 100, Gray 010 -> 110."""
        assert format(3, "03b") == "011" and format(4, "03b") == "100"
        assert codec.gray_encode(3, 3) == "010" and codec.gray_encode(4, 3) == "110"
        assert hamming("011", "100") == 3
        assert hamming("010", "110") == 1
