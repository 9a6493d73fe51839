"""
Majorization-minimization surrogates of the per-slot ARIS design problem.

With w = h_sr * h_rt, s = w^T phi and x = phi (x) phi (Kronecker product, vec column-major):

    |s|^2 = phi^H A phi,            A = conj(w) w^T
    ||Phi h_rt||^2 = phi^H B phi,   B = diag|h_rt|^2
    ||Phi h_sr||^2 = phi^H C phi,   C = diag|h_sr|^2

so that the ARIS power and the FP objective are

    P(phi) = phi^H G phi + x^H H x,              G = P_s C + (sigma0^2 + sigma1^2) I,  H = (P_s A + sigma0^2 B) (x) B
    F(phi) = x^H D x - phi^H V0 phi - c_hat,     D = (P_s A - l sigma0^2 B) (x) A,  V0 = l sigma1^2 C,  c_hat = l sigma^2

Note the orientation of A: with A = conj(w) w^T the quadratic form is |s|^2 and A is Hermitian.
The quartic terms are bounded by their extreme eigenvalues; the left-over quadratic in phi phi^T is bounded
in the real 2M form; the remaining ||phi||^4 term is bounded over the ball ||phi||^2 <= M a_max^2 which
contains the amplitude box. Both surrogates touch the exact functions at phi_k.
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple
import logging

import numpy as np

log = logging.getLogger('surrogates')


class KroneckerForm:
    """
    Sum of coef * (X (x) Y) applied implicitly: (X (x) Y) vec(V) = vec(Y V X^T) with column-major vec.
    M^2 x M^2 matrices are never stored.
    """

    def __init__(self, terms: List[Tuple[complex, np.ndarray, np.ndarray]]):
        if not terms:
            raise ValueError("Kronecker form needs at least one term")
        self.terms = [(coef, np.asarray(X), np.asarray(Y)) for coef, X, Y in terms]
        self.M = self.terms[0][1].shape[0]

    @property
    def n(self) -> int:
        return self.M * self.M

    def matvec(self, v: np.ndarray) -> np.ndarray:
        V = np.asarray(v).reshape(self.M, self.M, order="F")
        out = np.zeros((self.M, self.M), dtype=complex)
        for coef, X, Y in self.terms:
            out += coef * (Y @ V @ X.T)
        return out.reshape(-1, order="F")

    def quad(self, phi: np.ndarray) -> complex:
        """(phi (x) phi)^H K (phi (x) phi) = sum coef (phi^H X phi)(phi^H Y phi)"""
        total = 0j
        for coef, X, Y in self.terms:
            total += coef * np.vdot(phi, X @ phi) * np.vdot(phi, Y @ phi)
        return total

    def dense(self) -> np.ndarray:
        return sum(coef * np.kron(X, Y) for coef, X, Y in self.terms)

    def is_hermitian(self) -> bool:
        return all(
            np.isreal(coef) and np.allclose(X, X.conj().T) and np.allclose(Y, Y.conj().T)
            for coef, X, Y in self.terms
        )

    def hermitian_part(self) -> "KroneckerForm":
        """(K + K^H)/2, itself a Kronecker sum."""
        if self.is_hermitian():
            return self
        terms = []
        for coef, X, Y in self.terms:
            terms.append((coef / 2.0, X, Y))
            terms.append((np.conj(coef) / 2.0, X.conj().T, Y.conj().T))
        return KroneckerForm(terms)

    def merged(self) -> "KroneckerForm":
        """Collect terms sharing the same right factor: sum_i c_i X_i (x) Y = (sum_i c_i X_i) (x) Y."""
        groups: List[Tuple[np.ndarray, np.ndarray]] = []
        for coef, X, Y in self.terms:
            for k, (Xs, Ys) in enumerate(groups):
                if Ys is Y or np.array_equal(Ys, Y):
                    groups[k] = (Xs + coef * X, Ys)
                    break
            else:
                groups.append((coef * X, Y))
        return KroneckerForm([(1.0, X, Y) for X, Y in groups])

    def extreme_eigenvalues(self) -> Tuple[float, float]:
        """
        Smallest and largest eigenvalue of the Hermitian part, for forms whose terms share one Hermitian
        right factor (X (x) Y has the eigenvalues ex_i * ey_j). Both surrogate forms are of this kind.
        """
        herm = self.hermitian_part().merged()
        if len(herm.terms) != 1:
            raise ValueError(f"Closed-form eigenvalues need one shared right factor, got {len(herm.terms)} distinct ones")
        _, X, Y = herm.terms[0]
        if not np.allclose(Y, Y.conj().T):
            raise ValueError("Closed-form eigenvalues need a Hermitian right factor")
        ex = np.linalg.eigvalsh((X + X.conj().T) / 2.0)
        ey = np.linalg.eigvalsh((Y + Y.conj().T) / 2.0)
        products = np.outer(ex, ey)
        return float(products.min()), float(products.max())


def real_form(F: np.ndarray) -> np.ndarray:
    """2M x 2M real matrix R with Re{phi^H F conj(phi)} = xr^T R xr for xr = [Re phi; Im phi]."""
    return np.block([[F.real, F.imag], [F.imag, -F.real]])


def realify(phi: np.ndarray) -> np.ndarray:
    return np.concatenate([phi.real, phi.imag])


def recombine(g: np.ndarray) -> np.ndarray:
    """U: real 2M vector [g_a; g_b] -> complex g_a + j g_b, so that xr^T g = Re{phi^H U g}."""
    M = len(g) // 2
    return g[:M] + 1j * g[M:]


@dataclass(eq=False)
class SurrogateForms:
    """
    Objective minorizer   -phi^H V phi + Re{phi^H f_bar} + c0
    Constraint majorizer   phi^H K phi + Re{phi^H p_hat} + c2 + c3
    Diagonal matrices (V, G, K, B) are stored as vectors.
    """
    V: np.ndarray
    K: np.ndarray
    f_bar: np.ndarray
    p_hat: np.ndarray
    c0: float
    c2: float
    c3: float
    c1: float = 0.0  # c_hat = l sigma^2
    D: Optional[KroneckerForm] = None
    H: Optional[KroneckerForm] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    mu1: float = 0.0
    box_curvature: Tuple[float, float] = (0.0, 0.0)  # ||phi||^4 bound curvature added to (K, V)
    U: Callable = recombine

    def objective(self, phi: np.ndarray) -> float:
        return float(-np.sum(self.V * np.abs(phi) ** 2) + np.vdot(phi, self.f_bar).real + self.c0)

    def constraint(self, phi: np.ndarray) -> float:
        return float(np.sum(self.K * np.abs(phi) ** 2) + np.vdot(phi, self.p_hat).real + self.c2 + self.c3)


def build_surrogates(phi_k: np.ndarray, l: float, model, a_max: float) -> SurrogateForms:
    """
    Surrogates of the FP objective and of the ARIS power at phi_k.

    :param model: SnrModel of the slot
    :return: forms touching the exact functions at phi_k; the objective form is a lower bound and the
        constraint form an upper bound for every phi with |phi_m| <= a_max
    """
    h_sr, h_rt = model.h_sr, model.h_rt
    if not (np.all(np.isfinite(h_sr)) and np.all(np.isfinite(h_rt))):
        raise ValueError("Non-finite channel entries")
    phi_k = np.asarray(phi_k, dtype=complex)
    M = len(phi_k)
    if np.any(np.abs(phi_k) > a_max * (1.0 + 1e-9)):
        raise ValueError(f"Expansion point exceeds the amplitude cap {a_max}")

    w = h_sr * h_rt
    A = np.outer(np.conj(w), w)
    b = np.abs(h_rt) ** 2
    c = np.abs(h_sr) ** 2
    Bm = np.diag(b).astype(complex)
    R2 = M * a_max ** 2

    t_k = float(np.vdot(phi_k, phi_k).real)
    x_k = np.kron(phi_k, phi_k)
    xr_k = realify(phi_k)

    #
    # Constraint: P(phi) = phi^H G phi + x^H H x
    #
    H = KroneckerForm([(model.P_s, A, Bm), (model.sigma0_2, Bm, Bm)])
    G = model.P_s * c + (model.sigma0_2 + model.sigma1_2)
    lambda1 = max(H.extreme_eigenvalues()[1], 0.0)

    Hx = H.matvec(x_k)
    xHx = float(np.vdot(x_k, Hx).real)
    q_k = 2.0 * (Hx - lambda1 * x_k)
    Qr = real_form(q_k.reshape(M, M))
    Qs = Qr + Qr.T
    lambda2 = max(float(np.linalg.eigvalsh(Qs)[-1]), 0.0)

    box_K = 6.0 * lambda1 * R2
    K = G + lambda2 / 2.0 + box_K
    p_hat = recombine(Qs @ xr_k) - lambda2 * phi_k + lambda1 * (4.0 * t_k - 12.0 * R2) * phi_k
    c2 = lambda1 * t_k ** 2 - xHx + lambda1 * (6.0 * R2 * t_k - 3.0 * t_k ** 2)
    c3 = lambda2 / 2.0 * t_k - float(xr_k @ Qr @ xr_k)

    #
    # Objective: F(phi) = x^H D x - phi^H V0 phi - c_hat
    #
    D = KroneckerForm([(model.P_s, A, A), (-l * model.sigma0_2, Bm, A)])
    V0 = l * model.sigma1_2 * c
    c_hat = l * model.sigma2
    mu1 = D.extreme_eigenvalues()[0]

    Dx = D.matvec(x_k)
    f_k = 2.0 * (Dx - mu1 * x_k)
    Fr = real_form(f_k.reshape(M, M))
    Fs = Fr + Fr.T
    lambda3 = max(-float(np.linalg.eigvalsh(Fs)[0]), 0.0)

    # mu1 * ||phi||^4: tangent plane below it if mu1 >= 0, ball majorizer of ||phi||^4 if mu1 < 0
    box_V = 6.0 * max(-mu1, 0.0) * R2
    V = V0 + lambda3 / 2.0 + box_V
    f_bar = recombine(Fs @ xr_k + lambda3 * xr_k) + mu1 * (4.0 * t_k - (12.0 * R2 if mu1 < 0 else 0.0)) * phi_k

    F_k = float(np.vdot(x_k, Dx).real) - float(np.sum(V0 * np.abs(phi_k) ** 2)) - c_hat
    c0 = F_k + float(np.sum(V * np.abs(phi_k) ** 2)) - float(np.vdot(phi_k, f_bar).real)

    return SurrogateForms(
        V=V, K=K, f_bar=f_bar, p_hat=p_hat, c0=c0, c1=c_hat, c2=c2, c3=c3,
        D=D, H=H, A=A, B=b, G=G,
        lambda1=lambda1, lambda2=lambda2, lambda3=lambda3, mu1=mu1,
        box_curvature=(box_K, box_V),
    )
