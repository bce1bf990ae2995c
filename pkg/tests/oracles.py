"""Independent reference computations shared by the test modules."""
import numpy as np

U, UX, UB, UBX = (1, 0), (1, 1), (2, 0), (2, 1)


def contour_nu(N, xi, points=512):
    """Trapezoidal rule for (2 pi i)^-1 \\oint N(z, i xi z) dz / z^2 on |z| = 1."""
    theta = 2 * np.pi * np.arange(points) / points
    z = np.exp(1j * theta)
    vals = {U: z, UX: 1j * xi * z, UB: np.conj(z), UBX: -1j * xi * np.conj(z)}
    total = np.zeros_like(z)
    for (_, tri), c in N.terms:
        term = complex(c) * np.ones_like(z)
        for f in tri:
            term = term * vals[f]
        total += term
    # dz = i z dtheta, so the integrand becomes N / z / (2 pi)
    return np.mean(total / z)
