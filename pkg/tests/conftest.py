"""Shared test helpers: finite-difference gradient checking."""

from __future__ import annotations


def finite_difference_check(loss_fn, store, eps: float = 1e-5, rtol: float = 1e-4) -> float:
    """Compare analytic gradients against central differences.

    Returns the worst relative error over every parameter coordinate.
    Coordinates that disagree are re-measured with smaller steps before they
    count as failures: a ReLU kink inside the original +/-eps interval biases
    the difference quotient even though both gradients are correct, and
    shrinking eps moves the kink back out of the interval.

    The relative-error denominator is floored at 1e-4, which makes the
    comparison an absolute tolerance of rtol * 1e-4 = 1e-8 for near-zero
    gradients: central differences carry ~1e-10 of roundoff noise at these
    step sizes, so relative error below that floor is unmeasurable, while any
    genuine formula error still exceeds it by orders of magnitude.
    """
    loss = loss_fn()
    store.zero_grad()
    loss.backward()
    analytic = {name: t.grad.copy() for name, t in store.params.items()}

    def fd_at(t, idx, step):
        flat = t.data.reshape(-1)
        old = flat[idx]
        flat[idx] = old + step
        up = loss_fn().item()
        flat[idx] = old - step
        down = loss_fn().item()
        flat[idx] = old
        return (up - down) / (2.0 * step)

    def rel_err(a, f):
        return abs(a - f) / max(abs(a), abs(f), 1e-4)

    worst = 0.0
    for name, t in store.params.items():
        a_flat = analytic[name].reshape(-1)
        for idx in range(a_flat.size):
            err = rel_err(a_flat[idx], fd_at(t, idx, eps))
            if err >= rtol:
                err = min(err, rel_err(a_flat[idx], fd_at(t, idx, eps / 10)))
            if err >= rtol:
                err = min(err, rel_err(a_flat[idx], fd_at(t, idx, eps / 100)))
            worst = max(worst, err)
    return worst
