import numpy as np
import pytest

from sewrecon.dataio import GarmentDataset
from sewrecon.pattern import default_class_map, validate_pattern
from sewrecon.synthetic import (
    FAMILIES,
    GeneratorError,
    SyntheticSpec,
    garment_mesh,
    generate_pattern,
    generate_synthetic_dataset,
)

EXPECTED = {"skirt": (2, 4), "top": (2, 4), "tee": (4, 10), "dress": (4, 10)}


@pytest.mark.parametrize("family", FAMILIES)
def test_family_template(family):
    p = generate_pattern(family, np.random.default_rng(0))
    assert (len(p.panels), len(p.stitches)) == EXPECTED[family]
    assert p.garment_type == family
    assert validate_pattern(p, default_class_map()) == []


def test_skirt_stitched_along_both_sides():
    p = generate_pattern("skirt", np.random.default_rng(1))
    assert set(p.panels) == {"skirt_front", "skirt_back"}
    for s in p.stitches:
        assert {s.first[0], s.second[0]} == {"skirt_front", "skirt_back"}


@pytest.mark.parametrize("seed", range(25))
def test_generated_patterns_validate(seed):
    rng = np.random.default_rng(seed)
    cmap = default_class_map()
    for family in FAMILIES:
        assert validate_pattern(generate_pattern(family, rng), cmap) == []


def test_unknown_family():
    with pytest.raises(GeneratorError):
        generate_synthetic_dataset(SyntheticSpec({"cape": 3}), np.random.default_rng(0))
    with pytest.raises(GeneratorError):
        generate_pattern("cape", np.random.default_rng(0))


def test_mesh_lies_near_panels():
    p = generate_pattern("tee", np.random.default_rng(2))
    m = garment_mesh(p, np.random.default_rng(2))
    assert len(m.faces) > 100 and m.triangle_areas().min() > 0
    assert np.isfinite(m.vertices).all()


def test_dataset_split_holds_out_unseen(tiny_dataset):
    ds = GarmentDataset(tiny_dataset)
    sp = ds.split
    assert sp.is_disjoint()
    assert all(i.startswith("dress") for i in sp.test_unseen) and len(sp.test_unseen) == 3
    assert not any(i.startswith("dress") for i in sp.train + sp.validation + sp.test_seen)


def test_dataset_generation_is_seeded():
    spec = SyntheticSpec({"skirt": 2, "top": 1}, unseen=[], n_val=0, n_test=0)
    a = generate_synthetic_dataset(spec, np.random.default_rng(9))
    b = generate_synthetic_dataset(spec, np.random.default_rng(9))
    for sid in a[0]:
        np.testing.assert_array_equal(a[1][sid].vertices, b[1][sid].vertices)
