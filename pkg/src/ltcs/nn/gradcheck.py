import numpy as np

from ..errors import InvalidArgumentError, NumericalError


def grad_check(loss_fn, params, eps=1e-6, names=None, report=None, oracle_dtype=None):
    """Compare reverse-mode gradients against central finite differences.

    ``loss_fn(params)`` must zero-or-ignore prior gradients, return the scalar
    loss and accumulate its gradient into ``params``. Returns the worst
    relative error ``|a - n| / max(|a|, |n|, 1e-8)`` over every element of
    every parameter (or only ``names``). If ``report`` is a dict it receives
    the per-parameter worst error.

    With ``oracle_dtype`` (e.g. ``EXTENDED``) the finite differences are taken
    on a copy of the parameters in that dtype, so ``loss_fn`` must accept such
    a store. Rounding noise in the difference quotient then drops far below
    gradients near the ``1e-8`` floor; the analytic side stays 64-bit.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise InvalidArgumentError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    if params.dtype != np.float64:
        raise InvalidArgumentError("gradient checks require 64-bit parameters")

    probe = params if oracle_dtype is None else params.copy(oracle_dtype)

    def evaluate(store, tag):
        store.zero_grads()
        value = loss_fn(store)
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss while perturbing {tag}")
        return value

    evaluate(params, "<base>")
    names = params.names() if names is None else list(names)
    analytic = {n: params.grad(n).copy() for n in names}
    worst = 0.0
    for name in names:
        p = probe[name]
        flat = p.reshape(-1)
        a = analytic[name].reshape(-1)
        local = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = evaluate(probe, f"{name}[{i}]")
            flat[i] = orig - eps
            fm = evaluate(probe, f"{name}[{i}]")
            flat[i] = orig
            num = float((fp - fm) / (2 * p.dtype.type(eps)))
            err = abs(a[i] - num) / max(abs(a[i]), abs(num), 1e-8)
            local = max(local, err)
        if report is not None:
            report[name] = local
        worst = max(worst, local)
    params.zero_grads()
    probe.zero_grads()
    return worst
