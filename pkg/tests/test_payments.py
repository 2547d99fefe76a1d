import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import special

from lnrobust.errors import InsufficientDataError, InvalidPolicyError, OutOfRangeError
from lnrobust.payments import (Y, Z, GroundUpModel, PaymentSample, SeededRng, cdf_payment, frame,
                               from_log_scale, ground_up, pdf_y, pdf_z, s_star, sample_payments,
                               to_log_scale)


def test_frame_fields():
    fr = frame(3, 5.96e3, 1, 1)
    assert fr.t == pytest.approx(math.log(2))
    assert fr.T == pytest.approx(8.6927, abs=1e-4)
    assert fr.R == pytest.approx(7.9996, abs=1e-4)
    fr = frame(500, 1e5, 1, 0)
    assert fr.t == pytest.approx(6.2146, abs=1e-4) and fr.T == pytest.approx(11.5129, abs=1e-4)


@pytest.mark.parametrize("args", [(3, 3, 1, 1), (3, 2, 1, 1), (1, 5, 1, 1), (3, 5, 0, 1), (3, 5, -1, 0)])
def test_frame_rejects_bad_ordering(args):
    with pytest.raises(InvalidPolicyError):
        frame(*args)


def test_frame_allows_negative_t():
    fr = frame(1.5, 10.0, 1.0, 1.0)
    assert fr.t < 0


def test_model_requires_positive_sigma():
    with pytest.raises(ValueError):
        GroundUpModel(0.0, 1.0, 0.0)


def test_to_log_scale_examples():
    fr = frame(3, 100, 0.8, 1)
    s = to_log_scale([fr.raw_cap, fr.c * (fr.d - fr.w0) * (math.e - 1)], fr, Y)
    assert s.values[0] == fr.cap
    assert s.n2 == 1 and s.n1 == 1
    fr1 = frame(3, 100, 1, 1)
    assert to_log_scale([(fr1.d - fr1.w0) * (math.e - 1)], fr1, Y).values[0] == pytest.approx(1.0, rel=1e-15)
    z = to_log_scale([0.0, 5.0, fr.raw_cap * (1 - 1e-11)], fr, Z)
    assert (z.n0, z.n1, z.n2) == (1, 1, 1)
    assert z.values[0] == 0.0 and z.values[2] == fr.cap


@pytest.mark.parametrize("kind, raw, index", [(Y, [1.0, 0.0], 1), (Y, [98.0], 0), (Z, [2.0, -1.0], 1),
                                              (Z, [np.nan], 0)])
def test_to_log_scale_names_offending_index(kind, raw, index):
    fr = frame(3, 100, 1, 1)
    with pytest.raises(OutOfRangeError) as info:
        to_log_scale(raw, fr, kind)
    assert info.value.index == index


def test_payment_sample_invariants():
    with pytest.raises(OutOfRangeError):
        PaymentSample(Y, [0.0, 1.0], 2.0)
    with pytest.raises(OutOfRangeError):
        PaymentSample(Z, [3.0], 2.0)
    with pytest.raises(ValueError):
        PaymentSample("Q", [1.0], 2.0)
    s = PaymentSample(Z, [0.0, 0.0, 1.0, 2.0], 2.0)
    assert (s.n0, s.n1, s.n2, s.n) == (2, 1, 1, 4)
    np.testing.assert_array_equal(s.exact(), [1.0])


@given(st.floats(1.5, 500.0), st.floats(0.1, 3.0), st.floats(1e-6, 1.0))
@settings(max_examples=200, deadline=None)
def test_transform_round_trip(d, c, frac):
    fr = frame(d, d * 40.0, c, 1.0)
    raw = frac * fr.raw_cap
    back = from_log_scale(to_log_scale([raw], fr, Y).values, fr)[0]
    assert back == pytest.approx(raw, rel=1e-12)


def test_ground_up_recovers_losses():
    fr = frame(3, 100, 0.5, 1)
    losses = np.array([4.0, 20.0, 99.0])
    raw = fr.c * (losses - fr.d)
    np.testing.assert_allclose(ground_up(to_log_scale(raw, fr, Y), fr), losses, rtol=1e-13)


FRAMES = [(3, 5.96e3, 1, 1, 4, 2), (3, 752, 0.7, 1, 4, 2), (10, 60, 1, 0, 2.5, 0.6), (1.5, 20, 2, 1, -0.3, 1.1)]


@pytest.mark.parametrize("d, u, c, w0, theta, sigma", FRAMES)
def test_pdfs_integrate_to_one(d, u, c, w0, theta, sigma):
    fr, m = frame(d, u, c, w0), GroundUpModel(w0, theta, sigma)
    inner_y, _ = sp_integrate.quad(lambda y: pdf_y(y, fr, m), 0, fr.cap, epsabs=1e-13, epsrel=1e-12, limit=200)
    inner_z, _ = sp_integrate.quad(lambda z: pdf_z(z, fr, m), 0, fr.cap, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert inner_y + pdf_y(fr.cap, fr, m) == pytest.approx(1.0, abs=1e-8)
    assert inner_z + pdf_z(0.0, fr, m) + pdf_z(fr.cap, fr, m) == pytest.approx(1.0, abs=1e-8)


def test_point_masses(ln142, fr_wide):
    g, xi = fr_wide.gamma(ln142), fr_wide.xi(ln142)
    assert pdf_z(0.0, fr_wide, ln142) == pytest.approx(special.ndtr(g), rel=1e-14)
    assert pdf_y(fr_wide.cap, fr_wide, ln142) == pytest.approx(special.ndtr(-xi) / special.ndtr(-g), rel=1e-13)
    assert pdf_y(-1.0, fr_wide, ln142) == 0.0 and pdf_z(fr_wide.cap + 1, fr_wide, ln142) == 0.0


@pytest.mark.parametrize("kind", [Y, Z])
def test_cdf_matches_integrated_pdf(kind, ln142, fr_wide):
    pdf = pdf_y if kind == Y else pdf_z
    atom = 0.0 if kind == Y else pdf_z(0.0, fr_wide, ln142)
    for v in (0.5, 3.0, 7.0):
        inner, _ = sp_integrate.quad(lambda x: pdf(x, fr_wide, ln142), 0, v, epsabs=1e-13)
        assert cdf_payment(v, fr_wide, ln142, kind) == pytest.approx(atom + inner, abs=1e-10)
    assert cdf_payment(fr_wide.cap, fr_wide, ln142, kind) == 1.0


def test_s_star(ln142):
    assert s_star(frame(100, 2500, 1, 1), ln142) == pytest.approx(0.93, abs=0.005)
    # no censoring in the limit of a huge u
    assert s_star(frame(3, 1e300, 1, 1), GroundUpModel(1, 4, 0.5)) == pytest.approx(1.0, abs=1e-15)
    s = PaymentSample(Y, [1.0, 2.0, 2.0, 0.5], 2.0)
    assert s_star(None, s) == 0.5
    with pytest.raises(InsufficientDataError):
        s_star(None, PaymentSample(Y, [], 2.0))


def test_sampler_reproducible(ln142, fr_wide):
    a = sample_payments(fr_wide, ln142, 500, Y, SeededRng(9, 3))
    b = sample_payments(fr_wide, ln142, 500, Y, SeededRng(9, 3))
    c = sample_payments(fr_wide, ln142, 500, Y, SeededRng(9, 4))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_sampler_censoring_fractions(ln142, fr_wide):
    n = 10 ** 6
    g, xi = fr_wide.gamma(ln142), fr_wide.xi(ln142)
    y = sample_payments(fr_wide, ln142, n, Y, SeededRng(1))
    p = special.ndtr(-xi) / special.ndtr(-g)
    assert abs(y.n2 / n - p) <= 3 * math.sqrt(p * (1 - p) / n)
    assert y.n0 == 0
    z = sample_payments(fr_wide, ln142, n, Z, SeededRng(2))
    p0 = special.ndtr(g)
    assert abs(z.n0 / n - p0) <= 3 * math.sqrt(p0 * (1 - p0) / n)


@pytest.mark.parametrize("u", [752.0, 1540.0, 5960.0])
def test_empirical_s_star_converges(u, ln142):
    fr = frame(3, u, 1, 1)
    n = 20000
    s = sample_payments(fr, ln142, n, Y, SeededRng(int(u)))
    sp = s_star(fr, ln142)
    assert abs(s_star(fr, s) - sp) <= 4 * math.sqrt(sp * (1 - sp) / n)
