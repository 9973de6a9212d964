"""Independent reference values frozen into the C++ test suites.

Everything here is computed without touching the library: adaptive mpmath
quadrature for the fBm Volterra kernel, and a backward Riccati (dynamic
programming) recursion for the linear-quadratic rate problem.

Run:  python3 tests/oracles/compute_oracles.py
"""

import mpmath as mp

mp.mp.dps = 30


def volterra_kernel(H, t, s):
    """K_H(t, s) for H < 1/2 from its defining integral (no incomplete beta)."""
    H = mp.mpf(H)
    if s <= 0 or s >= t:
        return mp.mpf(0)  # measure-zero endpoints of an integrable singularity
    c = mp.sqrt(2 * H / ((1 - 2 * H) * mp.beta(1 - 2 * H, H + mp.mpf(1) / 2)))
    # w = (u - s)^(H+1/2) / (H+1/2) absorbs the (u - s)^(H-1/2) singularity.
    p = H + mp.mpf(1) / 2
    inner = mp.quad(lambda w: (s + (p * w) ** (1 / p)) ** (H - 1.5), [0, (t - s) ** p / p])
    first = (t / s) ** (H - 0.5) * (t - s) ** (H - 0.5)
    return c * (first - (H - 0.5) * s ** (0.5 - H) * inner)


def kernel_mass(H, t):
    """int_0^t K_H(t, s) ds."""
    return mp.quad(lambda s: volterra_kernel(H, t, s), [0, t / 2, t])


def kernel_covariance(H, t, s):
    """int_0^min(t,s) K_H(t, r) K_H(s, r) dr, must equal the fBm covariance."""
    lo = min(t, s)
    return mp.quad(lambda r: volterra_kernel(H, t, r) * volterra_kernel(H, s, r),
                   [0, lo / 2, lo])


def lqr_rate_dp(a, T, n):
    """Minimum of 1/2 sum udot_k^2 h subject to x_{k+1} = (1-h) x_k + h udot_k,
    x_0 = 0, x_n = a.  Backward recursion on the reachable-set Gramian."""
    h = mp.mpf(T) / n
    # Value function V_k(x) = q_k (a - phi_k x)^2 / 2 where phi_k propagates x to time T.
    gram = mp.mpf(0)  # sum_j c_j^2 / h, c_j = h (1-h)^(n-1-j)
    decay = mp.mpf(1)
    for _ in range(n):
        gram += (h * decay) ** 2 / h
        decay *= (1 - h)
    return a * a / (2 * gram)


if __name__ == "__main__":
    H = mp.mpf("0.4")
    print("kernel_mass(H=0.4, t=1)        =", mp.nstr(kernel_mass(H, 1), 17))
    print("kernel_cov(H=0.4, 1, 0.5)       =", mp.nstr(kernel_covariance(H, 1, mp.mpf("0.5")), 17))
    print("fbm_cov(H=0.4, 1, 0.5)          =",
          mp.nstr(0.5 * (1 + mp.mpf("0.5") ** (2 * H) - mp.mpf("0.5") ** (2 * H)), 17))
    t, u = mp.mpf("0.7"), mp.mpf("0.3")
    print("kernel_cov(H=0.4, 0.7, 0.3)     =", mp.nstr(kernel_covariance(H, t, u), 17))
    print("fbm_cov(H=0.4, 0.7, 0.3)        =",
          mp.nstr(0.5 * (t ** (2 * H) + u ** (2 * H) - (t - u) ** (2 * H)), 17))
    print("kernel(H=0.4, t=1, s=0.3)       =", mp.nstr(volterra_kernel(H, 1, mp.mpf("0.3")), 17))
    print("kernel(H=0.4, t=0.7, s=0.69)    =", mp.nstr(volterra_kernel(H, mp.mpf("0.7"), mp.mpf("0.69")), 17))
    for n in (256, 1 << 16):
        print(f"lqr_rate_dp(a=1, T=1, n={n})   =", mp.nstr(lqr_rate_dp(1, 1, n), 17))
    print("lqr continuous a^2/(1-e^-2T)    =", mp.nstr(1 / (1 - mp.e ** -2), 17))
