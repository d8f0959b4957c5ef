"""Closed-form reference values computed without the package under test.

Each function derives its value from first principles; ``FROZEN`` records the
outputs once so that tests compare against fixed numbers.
"""

import math


def example1_rho_q(lam):
    return 2.0 * (3.501 + 0.25 * lam * lam)


def example1_gamma_bar_origin(lam):
    rq = example1_rho_q(lam)
    return rq * rq + 0.25 + 1.25 * lam + rq / 2.0


def example1_kappa(x, theta_hat):
    return -theta_hat * math.cos(x) - 1.25 * x


def masp_square_plus_quartic(R0):
    # U/gamma = 1 / (2 (1 + s^2)) decreases in s, so the minimum sits at R0.
    return 0.5 / (2.0 * (1.0 + R0 * R0))


def supnorm_interval(c_gamma, c_U):
    # varpi ramps from zero: max U = c_U s^2, gamma = c_gamma s^2, fires at 2 dt c_gamma = c_U.
    return c_U / (2.0 * c_gamma)


def weighted_interval(gamma_c, a, b):
    return b / (a * gamma_c)


FROZEN = {
    "rho_q_lambda1": 7.502,
    "gamma_bar_origin_lambda1": 61.531004,
    "kappa_x1_th05": -1.520151,
    "exp_minus_0p1": 0.904837,
    "masp_sq_quartic_R1": 0.125,
    "supnorm_interval_2_half": 0.125,
}
