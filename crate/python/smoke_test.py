"""Smoke test for the tdcedn_py extension module."""

import math

import tdcedn_py as t


def test_poly_lr():
    assert t.poly_lr(0) == 1e-6
    assert t.poly_lr(20000) == 0.0
    assert abs(t.poly_lr(10000) - 5.7435e-7) < 1e-11


def test_balanced_bce_two_pixels():
    # one contour pixel, one background pixel, both predicted at 0.5
    assert abs(t.balanced_bce([[0.5, 0.5]], [[1.0, 0.0]]) - math.log(2)) < 1e-9


def test_fuse():
    a, b = [[0.4, 0.1]], [[0.8, 0.3]]
    assert abs(t.fuse(a, b, 0.5)[0][0] - 0.6) < 1e-12
    assert t.fuse(a, b, 1.0) == a
    assert t.fuse(a, b, 0.0) == b


def test_nms_and_evaluate():
    peak = [[0.0] * 9 for _ in range(9)]
    peak[4][4] = 0.7
    assert t.nms_thin(peak) == peak
    gt = [[1.0 if v > 0 else 0.0 for v in row] for row in peak]
    s = t.evaluate([peak], [[gt]])
    assert s["ods"] == 1.0 and s["ois"] == 1.0


def test_network():
    net = t.Network(seed=3, width_divisor=64)
    assert net.encoder_param_count < t.Network().encoder_param_count == 14714688
    image = [[[0.5] * 33 for _ in range(40)] for _ in range(3)]
    out = net.predict(image)
    assert len(out) == 40 and len(out[0]) == 33
    assert all(0.0 <= v <= 1.0 for row in out for v in row)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
    print("ok")
