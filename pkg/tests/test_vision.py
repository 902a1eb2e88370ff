import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from asgk import tensor as T
from asgk import vision
from asgk.nn import make_rng
from asgk.tensor import Tensor

from oracles import central_difference, largest_component, rel_error

grids = hnp.arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)),
                   elements=st.floats(0, 1, allow_nan=False))


class TestHeatmap:
    def test_channel_max_of_absolute_values(self):
        f = np.array([[[1.0, -3.0]], [[-2.0, 0.5]]])     # [C=2, 1, 2]
        np.testing.assert_allclose(vision.heatmap(f, channel_axis=0), [[0.0, 1.0]])

    def test_constant_map_normalises_to_zero(self):
        assert not vision.heatmap(np.full((3, 4, 4), 2.5), channel_axis=0).any()

    @given(hnp.arrays(np.float64, (3, 5, 5), elements=st.floats(-5, 5, allow_nan=False)))
    def test_range(self, f):
        H = vision.heatmap(f, channel_axis=0)
        assert H.min() >= 0.0 and H.max() <= 1.0


class TestExtractRegion:
    @given(grids, st.floats(0.05, 0.95))
    def test_matches_flood_fill(self, H, tau):
        region = vision.extract_region(H, vision.RegionConfig(tau=tau))
        expected = largest_component(H > tau)
        if expected is None:
            assert region.fallback and region.area == H.size
            assert region.bbox == (0, 0, H.shape[0] - 1, H.shape[1] - 1)
        else:
            bbox, area, mask = expected
            assert not region.fallback
            assert (region.bbox, region.area) == (bbox, area)
            np.testing.assert_array_equal(region.mask, mask)

    def test_tie_goes_to_first_in_scan(self):
        H = np.zeros((4, 4))
        H[0, 3] = H[3, 0] = 1.0
        assert vision.extract_region(H).bbox == (0, 3, 0, 3)

    def test_diagonal_cells_are_separate(self):
        H = np.eye(3)
        assert vision.extract_region(H).area == 1

    @pytest.mark.parametrize("kw", [dict(tau=1.0), dict(tau=0.0), dict(connectivity=8),
                                    dict(fusion_op="sub"), dict(crop_margin=-1)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            vision.RegionConfig(**kw)


class TestGeometry:
    def test_resize_identity(self, rng):
        img = rng.random((7, 5))
        np.testing.assert_allclose(vision.resize_bilinear(img, 7, 5), img, atol=1e-12)

    @given(st.integers(2, 20), st.integers(2, 20), st.floats(0, 1))
    def test_resize_constant(self, h, w, c):
        out = vision.resize_bilinear(np.full((5, 6), c), h, w)
        np.testing.assert_allclose(out, c, atol=1e-12)

    def test_full_grid_maps_to_full_image(self):
        region = vision.Region(np.ones((8, 8), bool), (0, 0, 7, 7), 64, True)
        assert vision.region_to_pixels(region, 8, (64, 64), offset=-3.5) == (0, 0, 64, 64)

    @given(st.integers(0, 7), st.integers(0, 7), st.integers(0, 7), st.integers(0, 7), st.integers(0, 2))
    def test_pixel_box_is_inside_and_nonempty(self, a, b, c, d, margin):
        r0, r1 = sorted((a, b))
        c0, c1 = sorted((c, d))
        region = vision.Region(np.zeros((8, 8), bool), (r0, c0, r1, c1), 1)
        y0, x0, y1, x1 = vision.region_to_pixels(region, 8, (64, 64), -3.5, margin)
        assert 0 <= y0 < y1 <= 64 and 0 <= x0 < x1 <= 64

    def test_margin_never_shrinks(self):
        region = vision.Region(np.zeros((8, 8), bool), (3, 3, 4, 4), 4)
        tight = vision.region_to_pixels(region, 8, (64, 64), -3.5, 0)
        wide = vision.region_to_pixels(region, 8, (64, 64), -3.5, 1)
        assert wide[0] <= tight[0] and wide[1] <= tight[1] and wide[2] >= tight[2] and wide[3] >= tight[3]

    def test_crop_output_size(self, rng):
        region = vision.Region(np.zeros((8, 8), bool), (2, 2, 3, 5), 8)
        assert vision.crop_resize(rng.random((64, 64)), region, 8).shape == (64, 64)


class TestBackbone:
    def test_shapes_and_grid(self, rng):
        net = vision.Backbone(make_rng(0))
        f_c, f_g = net(rng.random((2, 64, 64)))
        assert f_c.shape == (2, 64, 8, 8) and f_g.shape == (2, 64)
        assert net.grid_size == 8 and net.cell_offset == -3.5
        np.testing.assert_allclose(f_g.data, f_c.data.mean(axis=(2, 3)))

    def test_rejects_wrong_size(self):
        with pytest.raises(T.ShapeError):
            vision.Backbone(make_rng(0))(np.zeros((1, 32, 32)))

    def test_edge_pad_gradient(self, rng):
        x = rng.standard_normal((1, 1, 3, 4))
        w = rng.standard_normal((1, 1, 5, 6))
        leaf = Tensor(x.copy(), requires_grad=True)
        (vision.edge_pad(leaf) * Tensor(w)).sum().backward()
        numeric = central_difference(lambda a: float((vision.edge_pad(Tensor(a[0])).data * w).sum()), [x])
        assert rel_error([leaf.grad], numeric) < 1e-6

    def test_edge_pad_replicates_border(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
        np.testing.assert_array_equal(vision.edge_pad(x).data[0, 0],
                                      np.pad(np.arange(4.0).reshape(2, 2), 1, mode="edge"))

    def test_backbone_gradient(self):
        net = vision.Backbone(make_rng(1), channels=(2, 3), strides=(2, 1), input_size=8,
                              pixel_mean=0.3, pixel_std=0.2)
        x = np.random.default_rng(2).random((1, 8, 8))
        proj = np.random.default_rng(3).standard_normal((1, 3))
        params = list(net.parameters().values())
        net.zero_grad()
        (net(x)[1] * Tensor(proj)).sum().backward()
        analytic = [p.grad.copy() for p in params]

        def scalar(arrs):
            for p, a in zip(params, arrs):
                p.data = a
            return float((net(x)[1].data * proj).sum())

        numeric = central_difference(scalar, [p.data for p in params])
        assert rel_error(analytic, numeric) < 1e-5


class TestFusion:
    @pytest.mark.parametrize("op,ref", [("add", np.add), ("mul", np.multiply), ("max", np.maximum)])
    def test_ops(self, op, ref, rng):
        a, b = rng.standard_normal((2, 5)), rng.standard_normal((2, 5))
        out = vision.fuse(Tensor(a), Tensor(b), vision.RegionConfig(fusion_op=op))
        np.testing.assert_allclose(out.data, ref(a, b))

    def test_shape_mismatch(self):
        with pytest.raises(T.ShapeError):
            vision.fuse(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_extractor_branches(self, rng):
        vx = vision.VisualExtractor(make_rng(0), n_tags=5)
        images = rng.random((3, 64, 64))
        crops, regions = vx.region_crops(images)
        assert crops.shape == images.shape and len(regions) == 3
        _, f_g = vx.global_net(images)
        _, f_l = vx.region_net(crops)
        probs = vx.heads(f_g, f_l, vision.fuse(f_g, f_l))
        assert all(p.shape == (3, 5) and np.all((p.data > 0) & (p.data < 1)) for p in probs)

    def test_blank_image_falls_back(self):
        vx = vision.VisualExtractor(make_rng(0), n_tags=3)
        _, regions = vx.region_crops(np.zeros((1, 64, 64)))
        assert regions[0].fallback and regions[0].bbox == (0, 0, 7, 7)
