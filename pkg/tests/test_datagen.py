import dataclasses
import logging
from datetime import date

import numpy as np
import pytest

from harvestopt import formats
from harvestopt.core import INVALID, compute_harvest_date, original_schedule, validate_schedule
from harvestopt.datagen import (SITE0, SITE1, YIELD_S1, YIELD_S2, DatagenConfig, GenerationError,
                                YieldSpec, gen_dataset, gen_dataset_bundle, gen_gdu_history,
                                gen_species_table, reference_accumulation)


@pytest.fixture(scope="module")
def default_dataset():
    return gen_dataset(DatagenConfig(seed=0))


def test_history_length_and_sign(default_dataset):
    h = default_dataset.histories[0]
    assert len(h) == 11 * 365
    assert h.dates[0] == date(2009, 1, 1) and h.dates[-1] == date(2019, 12, 31)
    assert np.all(h.values >= 0)
    assert not any(d.month == 2 and d.day == 29 for d in h.dates)


def test_history_periodic_without_noise_or_trend():
    prof = dataclasses.replace(SITE1, gdu_noise_std=0.0, gdu_trend_per_year=0.0)
    h = gen_gdu_history(prof, 2009, 2012, np.random.default_rng(0))
    v = np.asarray(h.values)
    assert np.array_equal(v[365:], v[:-365])


def test_history_seed_determinism():
    a = gen_gdu_history(SITE0, 2009, 2010, np.random.default_rng(3))
    b = gen_gdu_history(SITE0, 2009, 2010, np.random.default_rng(3))
    assert np.array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        gen_gdu_history(SITE0, 2011, 2010, np.random.default_rng(3))


def test_species_counts_and_invariants(default_dataset):
    assert len(default_dataset.species[0]) == 1375
    assert len(default_dataset.species[1]) == 1194
    for site, species in default_dataset.species.items():
        ref = default_dataset.references[site]
        assert all(s.yield_q > 0 for s in species)
        assert validate_schedule(original_schedule(species), species) == []
        for s in species:
            assert compute_harvest_date(ref, s.g_harvest, s.original_plant) != INVALID
            assert compute_harvest_date(ref, s.g_harvest, s.d_late) != INVALID
        assert len({s.species_id for s in species}) == len(species)


def test_site0_windows_are_bimodal(default_dataset):
    centers = np.array([(s.d_early + s.d_late) / 2 for s in default_dataset.species[0]])
    near_feb = np.sum(np.abs(centers - 45) <= 10)
    near_may = np.sum(np.abs(centers - 135) <= 10)
    dip = np.sum(np.abs(centers - 90) <= 10)
    assert dip < 0.25 * min(near_feb, near_may)


def test_site1_windows_are_not_bimodal(default_dataset):
    centers = np.array([(s.d_early + s.d_late) / 2 for s in default_dataset.species[1]])
    dip = np.sum(np.abs(centers - 90) <= 10)
    near_feb = np.sum(np.abs(centers - 45) <= 10)
    assert dip > 0.5 * near_feb


def test_yield_spec_presets():
    assert (YIELD_S1.mean, YIELD_S1.std) == (250.0, 100.0)
    assert (YIELD_S2.mean, YIELD_S2.std) == (350.0, 150.0)
    with pytest.raises(ValueError):
        YieldSpec(1.0, -1.0)


def test_impossible_horizon_is_generation_error():
    prof = dataclasses.replace(SITE1, n_species=3)
    ref = reference_accumulation(prof, date(2020, 1, 1), 100, 2009)
    with pytest.raises(GenerationError):
        gen_species_table(prof, YIELD_S1, 100, ref, np.random.default_rng(0), max_attempts=20)


def test_bundle_is_byte_identical_and_reloads(tmp_path, caplog):
    small = (dataclasses.replace(SITE0, n_species=60), dataclasses.replace(SITE1, n_species=40))
    cfg = DatagenConfig(seed=11, profiles=small)
    a = gen_dataset_bundle(cfg, tmp_path / "a")
    b = gen_dataset_bundle(cfg, tmp_path / "b")
    names = [formats.HISTORY_FILE, formats.SPECIES_FILE, formats.SCENARIO_FILE,
             formats.MANIFEST_FILE]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    with caplog.at_level(logging.WARNING):
        ds = formats.ingest_dataset(a)
    assert not [r for r in caplog.records if r.levelno >= logging.WARNING]
    assert sum(len(v) for v in ds.species.values()) == 100
    assert len(ds.histories[0]) == 11 * 365


def test_default_bundle_row_count(tmp_path):
    out = gen_dataset_bundle(DatagenConfig(seed=0), tmp_path)
    lines = (out / formats.SPECIES_FILE).read_text().splitlines()
    assert len(lines) - 1 == 1375 + 1194
