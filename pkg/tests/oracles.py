"""Independent reference computations shared by the test modules."""
import numpy as np


def lorenz_rhs(y, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    return np.array([sigma * (y[1] - y[0]), y[0] * (rho - y[2]) - y[1], y[0] * y[1] - beta * y[2]])


def lorenz_jac(y, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    return np.array([[-sigma, sigma, 0.0], [rho - y[2], -1.0, -y[0]], [y[1], y[0], -beta]])


def benettin_rk4(y0, horizon, renorm=0.5, dt=0.005, f=lorenz_rhs, jac=lorenz_jac):
    """Euclidean Lyapunov spectrum by fixed-step RK4 and numpy QR."""
    y = np.array(y0, dtype=float)
    n = y.size
    Q = np.eye(n)
    sums = np.zeros(n)
    steps = int(round(renorm / dt))
    blocks = int(round(horizon / renorm))

    def rhs(s):
        x, M = s[:n], s[n:].reshape(n, n)
        return np.concatenate([f(x), (jac(x) @ M).ravel()])

    for _ in range(blocks):
        s = np.concatenate([y, Q.ravel()])
        for _ in range(steps):
            k1 = rhs(s)
            k2 = rhs(s + 0.5 * dt * k1)
            k3 = rhs(s + 0.5 * dt * k2)
            k4 = rhs(s + dt * k3)
            s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        y = s[:n]
        Q, R = np.linalg.qr(s[n:].reshape(n, n))
        d = np.sign(np.diag(R))
        Q = Q * d
        sums += np.log(np.abs(np.diag(R)))
    return np.sort(sums / (blocks * renorm))[::-1]
