"""Dataset generation, splitting, seeding, and the NMD1 container."""

import numpy as np
import pytest

from nomadet.datapipe import (CLASS_ORDER, derive_seed, generate_dataset,
                              generate_sample, load_dataset, save_dataset,
                              scenario_from_dict, scenario_to_dict,
                              split_dataset)
from nomadet.errors import (BadMagicError, TruncatedFileError,
                            VersionMismatchError)
from nomadet.sigsim import ModScheme, NomaScenario


def quick_scenario(samples_per_class=3, seed=0):
    return NomaScenario(near_schemes=(ModScheme.QPSK,), snr_db_near=10.0,
                        samples_per_class=samples_per_class,
                        symbols_per_frame=64, grid_size=24, seed=seed)


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)

    def test_sensitive_to_every_part(self):
        base = derive_seed(1, 2, 3)
        assert derive_seed(2, 2, 3) != base
        assert derive_seed(1, 3, 3) != base
        assert derive_seed(1, 2, 4) != base

    def test_fits_in_u64(self):
        s = derive_seed(2 ** 63, 5, 7)
        assert 0 <= s < 2 ** 64


class TestGenerateDataset:
    def test_counts_and_class_coverage(self):
        samples = generate_dataset(quick_scenario(samples_per_class=3))
        assert len(samples) == 12
        labels = [s.label for s in samples]
        assert all(labels.count(c) == 3 for c in range(4))

    def test_single_sample_per_class(self):
        samples = generate_dataset(quick_scenario(samples_per_class=1))
        assert sorted(s.label for s in samples) == [0, 1, 2, 3]

    def test_bit_identical_regeneration(self):
        a = generate_dataset(quick_scenario(seed=5))
        b = generate_dataset(quick_scenario(seed=5))
        for sa, sb in zip(a, b):
            assert sa.seed == sb.seed and sa.label == sb.label
            np.testing.assert_array_equal(sa.diagram.grid, sb.diagram.grid)

    def test_per_sample_regeneration_from_recorded_seed(self):
        scenario = quick_scenario(seed=9)
        samples = generate_dataset(scenario)
        probe = samples[7]
        regen = generate_sample(scenario, probe.label, probe.seed)
        np.testing.assert_array_equal(regen.diagram.grid, probe.diagram.grid)

    def test_raw_mode_differs_from_denoised(self):
        scenario = quick_scenario(seed=2)
        den = generate_dataset(scenario, denoise=True)
        raw = generate_dataset(scenario, denoise=False)
        assert any(np.any(a.diagram.grid != b.diagram.grid)
                   for a, b in zip(den, raw))


class TestSplitDataset:
    def test_1000_samples_split_600_200_200(self):
        samples = generate_dataset(quick_scenario(samples_per_class=250))
        split = split_dataset(samples, seed=3)
        assert (len(split.train), len(split.validation), len(split.test)) == \
            (600, 200, 200)

    def test_disjoint_and_exhaustive(self):
        samples = generate_dataset(quick_scenario(samples_per_class=7))
        split = split_dataset(samples, seed=1)
        merged = sorted(split.all_indices())
        assert merged == list(range(len(samples)))

    def test_ten_samples_land_on_622(self):
        samples = generate_dataset(quick_scenario(samples_per_class=3))[:10]
        split = split_dataset(samples, seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == (6, 2, 2)

    def test_per_class_balance_within_one(self):
        for per_class in (5, 13, 50):
            samples = generate_dataset(quick_scenario(samples_per_class=per_class))
            split = split_dataset(samples, seed=11)
            for bucket, ratio in ((split.train, 0.6), (split.validation, 0.2),
                                  (split.test, 0.2)):
                labels = [samples[i].label for i in bucket]
                for c in range(4):
                    assert abs(labels.count(c) - ratio * per_class) <= 1.0

    def test_deterministic_under_seed(self):
        samples = generate_dataset(quick_scenario(samples_per_class=6))
        a = split_dataset(samples, seed=4)
        b = split_dataset(samples, seed=4)
        assert a == b
        c = split_dataset(samples, seed=5)
        assert a != c

    def test_too_few_samples_rejected(self):
        samples = generate_dataset(quick_scenario(samples_per_class=2))[:9]
        with pytest.raises(ValueError, match="at least 10"):
            split_dataset(samples, seed=0)


class TestContainer:
    def test_round_trip_equality(self, tmp_path):
        scenario = quick_scenario(samples_per_class=3, seed=8)
        samples = generate_dataset(scenario)
        path = tmp_path / "data.nmd"
        save_dataset(samples, path, scenario)
        loaded, manifest = load_dataset(path)
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            assert a.label == b.label
            assert a.seed == b.seed
            assert a.snr_db == pytest.approx(b.snr_db, abs=1e-6)
            np.testing.assert_allclose(a.diagram.grid, b.diagram.grid, atol=1e-7)
        assert manifest["sample_count"] == len(samples)
        rebuilt = scenario_from_dict(manifest["scenario"])
        assert rebuilt == scenario

    def test_scenario_dict_round_trip(self):
        scenario = quick_scenario()
        assert scenario_from_dict(scenario_to_dict(scenario)) == scenario

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "data.nmd"
        save_dataset(generate_dataset(quick_scenario(1)), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"JUNK"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            load_dataset(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "data.nmd"
        save_dataset(generate_dataset(quick_scenario(1)), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 200
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatchError):
            load_dataset(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "data.nmd"
        save_dataset(generate_dataset(quick_scenario(1)), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-20])
        with pytest.raises(TruncatedFileError):
            load_dataset(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "data.nmd"
        save_dataset(generate_dataset(quick_scenario(1)), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(TruncatedFileError):
            load_dataset(path)

    def test_empty_dataset_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_dataset([], tmp_path / "x.nmd")
