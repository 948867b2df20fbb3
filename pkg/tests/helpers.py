"""Random loop generators shared by the test modules."""
import numpy as np

from nilsym.loops import TwistedLoop


def random_twisted(rng, n=16, deg=3, scale=0.2):
    terms = {}
    for d in range(-deg, deg + 1):
        m = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) * scale ** abs(d)
        terms[d] = np.diag(np.diag(m)) if d % 2 == 0 else m - np.diag(np.diag(m))
    return TwistedLoop.from_terms(terms, n)


def unipotent(n, d, x, upper):
    m = np.zeros((2, 2), complex)
    m[0 if upper else 1, 1 if upper else 0] = x
    return TwistedLoop.from_terms({0: np.eye(2), d: m}, n)


def random_sl2_loop(rng, n=16, degrees=(-1, -3, 1, 3, -1, 1), size=0.5):
    """Product of unipotent twisted factors: det = 1, generically in the big cell."""
    g = TwistedLoop.identity(n)
    for d in degrees:
        x = (rng.normal() + 1j * rng.normal()) * size
        g = g @ unipotent(n, d, x, rng.random() < 0.5)
    return g


def random_su11_loop(rng, n=16, t=0.4):
    """exp of a random element of the twisted su(1,1) loop algebra (degrees -1, 0, 1)."""
    from nilsym.loops import loop_exp
    a = rng.normal() * t
    b = (rng.normal() + 1j * rng.normal()) * t
    # X(lambda) = [[i a, lambda^{-1} b - lambda conj(c)...]] kept simple: off-diagonal b/lambda + conj(b) lambda
    X = TwistedLoop.from_terms({-1: [[0, b], [0, 0]], 0: np.diag([1j * a, -1j * a]),
                                1: [[0, 0], [np.conj(b), 0]]}, n)
    return loop_exp(X)
