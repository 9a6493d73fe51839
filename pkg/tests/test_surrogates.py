import pytest
import numpy as np
import numpy.testing as npt

from common.utils import complex_normal
from common.aris_opt import SnrModel, compute_snr, aris_power, fp_objective
from common.surrogates import *


def hermitian(rng, M):
	X = complex_normal(rng, (M, M))
	return (X + X.conj().T) / 2.0


def random_model(seed, M, scale=0.5):
	rng = np.random.default_rng(seed)
	return SnrModel(
		P_s=2.0, sigma2=1e-2, sigma0_2=2e-2, sigma1_2=1e-2,
		h_sr=scale * complex_normal(rng, M), h_rt=scale * complex_normal(rng, M),
	)


def box_points(rng, M, a_max, count):
	mag = a_max * np.sqrt(rng.random((count, M)))
	return mag * np.exp(2j * np.pi * rng.random((count, M)))


def test_kronecker_form_matches_dense():
	rng = np.random.default_rng(0)
	M = 3
	terms = [(1.5, complex_normal(rng, (M, M)), complex_normal(rng, (M, M))),
			 (-0.3j, complex_normal(rng, (M, M)), complex_normal(rng, (M, M)))]
	K = KroneckerForm(terms)
	assert K.n == 9
	dense = K.dense()
	v = complex_normal(rng, 9)
	npt.assert_allclose(K.matvec(v), dense @ v, atol=1e-12)

	phi = complex_normal(rng, M)
	x = np.kron(phi, phi)
	npt.assert_allclose(K.quad(phi), np.vdot(x, dense @ x), rtol=1e-12)

	assert not K.is_hermitian()
	herm = K.hermitian_part().dense()
	npt.assert_allclose(herm, (dense + dense.conj().T) / 2.0, atol=1e-12)

	with pytest.raises(ValueError):
		KroneckerForm([])


def test_merged_terms():
	rng = np.random.default_rng(1)
	X1, X2, Y = hermitian(rng, 3), hermitian(rng, 3), hermitian(rng, 3)
	K = KroneckerForm([(2.0, X1, Y), (-1.0, X2, Y)])
	merged = K.merged()
	assert len(merged.terms) == 1
	npt.assert_allclose(merged.dense(), K.dense(), atol=1e-12)


@pytest.mark.parametrize("M", [2, 3, 5])
def test_extreme_eigenvalues(M):
	rng = np.random.default_rng(M)
	# Single product term
	X, Y = hermitian(rng, M), hermitian(rng, M)
	single = KroneckerForm([(1.0, X, Y)])
	e = np.linalg.eigvalsh(single.dense())
	npt.assert_allclose(single.extreme_eigenvalues(), [e[0], e[-1]], rtol=1e-10, atol=1e-12)

	# Terms sharing the right factor, as in both surrogate forms
	shared = KroneckerForm([(2.0, hermitian(rng, M), Y), (-0.7, hermitian(rng, M), Y)])
	e = np.linalg.eigvalsh(shared.dense())
	npt.assert_allclose(shared.extreme_eigenvalues(), [e[0], e[-1]], rtol=1e-10, atol=1e-12)

	# Non-Hermitian left factor with real coefficient: its Hermitian part is bounded
	Z = complex_normal(rng, (M, M))
	skew = KroneckerForm([(1.0, Z, Y)])
	e = np.linalg.eigvalsh((skew.dense() + skew.dense().conj().T) / 2.0)
	npt.assert_allclose(skew.extreme_eigenvalues(), [e[0], e[-1]], rtol=1e-10, atol=1e-12)


def test_extreme_eigenvalues_need_shared_factor():
	rng = np.random.default_rng(7)
	K = KroneckerForm([(1.0, hermitian(rng, 3), hermitian(rng, 3)), (0.5, hermitian(rng, 3), hermitian(rng, 3))])
	with pytest.raises(ValueError, match="shared right factor"):
		K.extreme_eigenvalues()


def test_surrogate_forms_have_shared_factor():
	model = random_model(3, 6)
	w = model.h_sr * model.h_rt
	A = np.outer(np.conj(w), w)
	Bm = np.diag(np.abs(model.h_rt) ** 2).astype(complex)
	for K in (KroneckerForm([(model.P_s, A, Bm), (model.sigma0_2, Bm, Bm)]),
			  KroneckerForm([(model.P_s, A, A), (-0.3 * model.sigma0_2, Bm, A)])):
		assert len(K.hermitian_part().merged().terms) == 1
		e = np.linalg.eigvalsh(K.dense())
		npt.assert_allclose(K.extreme_eigenvalues(), [e[0], e[-1]], rtol=1e-9, atol=1e-12 * np.abs(e).max())


def test_real_form_and_recombine():
	rng = np.random.default_rng(2)
	M = 4
	F = complex_normal(rng, (M, M))
	phi = complex_normal(rng, M)
	xr = realify(phi)
	npt.assert_allclose(xr @ real_form(F) @ xr, np.vdot(phi, F @ np.conj(phi)).real)

	g = rng.standard_normal(2 * M)
	npt.assert_allclose(xr @ g, np.vdot(phi, recombine(g)).real)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_tangency(seed):
	M, a_max = 6, 1.5
	model = random_model(seed, M)
	rng = np.random.default_rng(100 + seed)
	phi_k = box_points(rng, M, a_max, 1)[0]
	l = compute_snr(phi_k, model)
	forms = build_surrogates(phi_k, l, model, a_max)

	scale = abs(forms.c0) + abs(forms.c2) + abs(forms.c3) + 1.0
	assert abs(forms.objective(phi_k) - fp_objective(phi_k, l, model)) <= 1e-8 * scale
	assert abs(forms.constraint(phi_k) - aris_power(phi_k, model)) <= 1e-8 * scale
	# The auxiliary variable equal to the SNR makes the exact objective zero
	npt.assert_allclose(fp_objective(phi_k, l, model), 0.0, atol=1e-12 * scale)

	assert np.all(forms.V >= 0) and np.all(forms.K > 0)
	assert forms.lambda1 >= 0 and forms.lambda2 >= 0 and forms.lambda3 >= 0
	npt.assert_allclose(forms.c1, l * model.sigma2)


@pytest.mark.parametrize("seed", [0, 1])
def test_surrogates_bound_the_exact_functions(seed):
	M, a_max = 5, 1.2
	model = random_model(seed, M)
	rng = np.random.default_rng(200 + seed)
	phi_k = box_points(rng, M, a_max, 1)[0]
	l = compute_snr(phi_k, model)
	forms = build_surrogates(phi_k, l, model, a_max)
	scale = abs(forms.c0) + abs(forms.c2) + abs(forms.c3) + 1.0

	for phi in box_points(rng, M, a_max, 1000):
		assert forms.objective(phi) <= fp_objective(phi, l, model) + 1e-9 * scale
		assert forms.constraint(phi) >= aris_power(phi, model) - 1e-9 * scale


def test_single_element_grid():
	model = random_model(5, 1)
	a_max = 2.0
	phi_k = np.array([0.7 * np.exp(0.4j)])
	l = compute_snr(phi_k, model)
	forms = build_surrogates(phi_k, l, model, a_max)
	scale = abs(forms.c0) + abs(forms.c2) + abs(forms.c3) + 1.0

	for r in np.linspace(0.0, a_max, 41):
		for theta in np.linspace(0.0, 2 * np.pi, 32, endpoint=False):
			phi = np.array([r * np.exp(1j * theta)])
			assert forms.objective(phi) <= fp_objective(phi, l, model) + 1e-9 * scale
			assert forms.constraint(phi) >= aris_power(phi, model) - 1e-9 * scale


def test_exact_forms():
	model = random_model(3, 4)
	rng = np.random.default_rng(3)
	phi = complex_normal(rng, 4)
	l = 0.7
	forms = build_surrogates(np.zeros(4, dtype=complex), l, model, 5.0)
	x = np.kron(phi, phi)

	quartic = forms.H.quad(phi).real
	npt.assert_allclose(np.sum(forms.G * np.abs(phi) ** 2) + quartic, aris_power(phi, model), rtol=1e-10)
	exact = forms.D.quad(phi).real - l * model.sigma1_2 * np.sum(np.abs(phi * model.h_sr) ** 2) - forms.c1
	npt.assert_allclose(exact, fp_objective(phi, l, model), rtol=1e-10, atol=1e-12)
	npt.assert_allclose(np.vdot(phi, forms.A @ phi).real, abs(np.sum(model.w * phi)) ** 2, rtol=1e-10)
	npt.assert_allclose(np.vdot(x, forms.D.matvec(x)), forms.D.quad(phi), rtol=1e-10)


def test_invalid_input():
	model = random_model(0, 3)
	with pytest.raises(ValueError, match="cap"):
		build_surrogates(np.full(3, 2.0 + 0j), 1.0, model, 1.0)

	bad = SnrModel(P_s=1.0, sigma2=1.0, sigma0_2=1.0, sigma1_2=1.0,
				   h_sr=np.array([np.nan, 1.0]), h_rt=np.ones(2, dtype=complex))
	with pytest.raises(ValueError, match="Non-finite"):
		build_surrogates(np.ones(2, dtype=complex), 1.0, bad, 2.0)
