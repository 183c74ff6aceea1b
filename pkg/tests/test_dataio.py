import numpy as np
import pytest
from scipy import stats as sps

from sewrecon.dataio import (
    DataError,
    GarmentDataset,
    Mesh,
    NormalizationStats,
    PointCloudSample,
    add_gaussian_noise,
    corrupt_scan_imitation,
    fit_normalization,
    read_obj,
    sample_point_cloud,
    split_by_type,
    write_obj,
)
from sewrecon.pattern import MAX_EDGES, PatternTensor

UNIT_SQUARE = Mesh(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float), np.array([[0, 1, 2], [0, 2, 3]]))


def test_sample_inside_unit_square():
    c = sample_point_cloud(UNIT_SQUARE, 4, np.random.default_rng(0))
    assert c.points.shape == (4, 3)
    assert np.all((c.points[:, :2] >= 0) & (c.points[:, :2] <= 1))
    np.testing.assert_array_equal(c.points[:, 2], 0)


def test_sample_fixed_seed():
    a = sample_point_cloud(UNIT_SQUARE, 50, np.random.default_rng(3)).points
    b = sample_point_cloud(UNIT_SQUARE, 50, np.random.default_rng(3)).points
    np.testing.assert_array_equal(a, b)


def test_sample_empty_mesh():
    with pytest.raises(DataError):
        sample_point_cloud(Mesh(np.zeros((0, 3)), np.zeros((0, 3), int)), 10)


def test_sample_counts_follow_area():
    # triangles of area 0.5, 1.5, 3 laid side by side along x
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                      [2, 0, 0], [5, 0, 0], [2, 1, 0],
                      [6, 0, 0], [12, 0, 0], [6, 1, 0]], float)
    mesh = Mesh(verts, np.arange(9).reshape(3, 3))
    n = 100_000
    pts = sample_point_cloud(mesh, n, np.random.default_rng(1)).points
    counts = np.array([np.sum(pts[:, 0] <= 1), np.sum((pts[:, 0] >= 2) & (pts[:, 0] <= 5)), np.sum(pts[:, 0] >= 6)])
    p = mesh.triangle_areas() / mesh.triangle_areas().sum()
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 3 * sigma)


def test_sample_uniform_within_triangle():
    # barycentric sampling: x-coordinate of a right triangle has a linear density
    mesh = Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
    pts = sample_point_cloud(mesh, 20_000, np.random.default_rng(2)).points
    # CDF of x under uniform area: 1 - (1 - x)^2
    res = sps.kstest(pts[:, 0], lambda x: 1 - (1 - np.clip(x, 0, 1)) ** 2)
    assert res.pvalue > 1e-3


def test_obj_roundtrip(tmp_path):
    write_obj(UNIT_SQUARE, tmp_path / "m.obj")
    m = read_obj(tmp_path / "m.obj")
    np.testing.assert_allclose(m.vertices, UNIT_SQUARE.vertices)
    np.testing.assert_array_equal(m.faces, UNIT_SQUARE.faces)


def test_read_obj_fans_quads(tmp_path):
    (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    m = read_obj(tmp_path / "q.obj")
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def _cloud(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloudSample(rng.uniform(-30, 30, (n, 3)), "x")


def test_scan_zero_occluders_identity():
    c = _cloud()
    out = corrupt_scan_imitation(c, 0, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(out.points, c.points)


@pytest.mark.parametrize("seed", range(5))
def test_scan_keeps_enough_points(seed):
    c = _cloud(seed=seed)
    out = corrupt_scan_imitation(c, 3, (20.0, 40.0), np.random.default_rng(seed))
    assert len(out) >= 0.6 * len(c)
    assert out.corruption == "scan"


def test_scan_holes_are_local():
    c = _cloud()
    rng = np.random.default_rng(4)
    out = corrupt_scan_imitation(c, 3, (4.0, 10.0), rng)
    kept = {tuple(p) for p in out.points}
    removed = np.array([p for p in c.points if tuple(p) not in kept])
    # replay the draw to recover the occluders
    rng = np.random.default_rng(4)
    centers = c.points[rng.choice(len(c.points), 3, replace=False)]
    radii = rng.uniform(4.0, 10.0, 3)
    d = np.linalg.norm(removed[:, None] - centers[None], axis=-1)
    assert len(removed) > 0
    assert np.all(np.any(d <= radii, axis=1))
    # surviving points keep their coordinates (no recentering)
    assert kept <= {tuple(p) for p in c.points}


def test_noise_zero_identity():
    c = _cloud()
    np.testing.assert_array_equal(add_gaussian_noise(c, 0.0, np.random.default_rng(0)).points, c.points)


def test_noise_std():
    c = _cloud()
    out = add_gaussian_noise(c, 1.0, np.random.default_rng(0))
    assert abs(np.std(out.points - c.points) - 1.0) < 0.05
    again = add_gaussian_noise(c, 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out.points, again.points)


def test_noise_negative_sigma():
    with pytest.raises(DataError):
        add_gaussian_noise(_cloud(), -1.0)


def _tensors(synthetic_patterns):
    from sewrecon.pattern import default_class_map, encode_pattern
    cmap = default_class_map()
    return [encode_pattern(p, cmap) for p in synthetic_patterns]


def test_fit_normalization_properties(synthetic_patterns):
    rng = np.random.default_rng(0)
    clouds = [rng.normal(5, 3, (100, 3)) for _ in range(5)]
    tensors = _tensors(synthetic_patterns)
    s = fit_normalization(clouds, tensors)
    z = s.standardize_points(np.concatenate(clouds))
    assert np.abs(z.mean(axis=0)).max() < 1e-6
    assert np.abs(z.std(axis=0) - 1).max() < 1e-6
    for t in tensors:
        st = s.standardize_tensor(t)
        present = np.any(t.placement != 0, axis=-1)
        assert np.all((st.placement[present] >= 0) & (st.placement[present] <= 1))
        # padding stays zero
        pad = ~np.any(t.edges[..., :4] != 0, axis=-1)
        assert not st.edges[pad].any() and not st.placement[~present].any()
        back = s.destandardize_tensor(st)
        np.testing.assert_allclose(back.edges[~pad], t.edges[~pad], atol=1e-6)
        np.testing.assert_allclose(back.placement[present], t.placement[present], atol=1e-6)
    np.testing.assert_allclose(s.destandardize_points(z), np.concatenate(clouds), atol=1e-6)


def test_edge_mean_near_zero(synthetic_patterns):
    # every loop sums to zero, so the pooled edge-vector mean is small
    s = fit_normalization([np.random.default_rng(0).normal(size=(10, 3))], _tensors(synthetic_patterns))
    assert np.all(np.abs(s.edge_mean[:2]) < 0.1 * s.edge_std[:2])


def test_fit_zero_variance():
    t = PatternTensor(np.zeros((1, MAX_EDGES, 4)), np.ones((1, 7)))
    t.edges[0, :3, :2] = [[1, 0], [1, 0], [1, 0]]
    with pytest.raises(DataError):
        fit_normalization([np.ones((5, 3))], [t])


def test_stats_save_load(tmp_path, synthetic_patterns):
    s = fit_normalization([np.random.default_rng(0).normal(size=(10, 3))], _tensors(synthetic_patterns))
    s.save(tmp_path / "s.json")
    t = NormalizationStats.load(tmp_path / "s.json")
    assert t.stats_id == s.stats_id


def test_split_by_type_contract():
    types = {f"a{i}": "a" for i in range(10)} | {f"b{i}": "b" for i in range(10)} | {f"u{i}": "u" for i in range(4)}
    sp = split_by_type(types, ["u"], 2, 3, np.random.default_rng(0))
    assert sp.is_disjoint() and sorted(sp.all_ids()) == sorted(types)
    assert sorted(sp.test_unseen) == [f"u{i}" for i in range(4)]
    assert not any(i.startswith("u") for i in sp.train + sp.validation + sp.test_seen)
    assert len(sp.validation) == 4 and len(sp.test_seen) == 6


def test_dataset_cloud_independent_of_order(tiny_dataset):
    ds = GarmentDataset(tiny_dataset)
    a, b = ds.split.train[:2]
    first = ds.cloud(a, 32, 0).points
    ds.cloud(b, 32, 0)
    np.testing.assert_array_equal(GarmentDataset(tiny_dataset).cloud(a, 32, 0).points, first)
    assert not np.array_equal(ds.cloud(a, 32, 1).points, first)


def test_dataset_missing_stats(tmp_path, tiny_dataset):
    import shutil
    copy = tmp_path / "copy"
    shutil.copytree(tiny_dataset, copy)
    (copy / "norm_stats.json").unlink()
    with pytest.raises(DataError, match="prepare-data"):
        GarmentDataset(copy).stats()
