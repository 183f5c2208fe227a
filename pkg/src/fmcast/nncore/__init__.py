from . import tensor
from .nets import MLP, MLPSpec, ModelParams, UNet, UNetSpec, build, copy_params
from .optim import Adam, AdamState, adam_step
from .tensor import NonFiniteError, Tensor, grad, no_grad, value_and_grad


def input_gradient(net, params, x, t=0.0, cond=None, create_graph: bool = True) -> Tensor:
    """Gradient of ``sum(net(params, x, t, cond))`` with respect to ``x``.

    Per-sample sums are independent, so this is the per-sample input gradient
    of the summed discriminator output. With ``create_graph`` the result stays
    differentiable with respect to tensors in ``params``.
    """
    x = x if isinstance(x, Tensor) and x.requires_grad else Tensor(getattr(x, "data", x), requires_grad=True)
    with tensor.set_grad_enabled(True):
        out = net(params, x, t, cond)
        total = tensor.sum_(out)
    (g,) = grad(total, [x], create_graph=create_graph)
    return g


__all__ = [
    "Adam",
    "AdamState",
    "MLP",
    "MLPSpec",
    "ModelParams",
    "NonFiniteError",
    "Tensor",
    "UNet",
    "UNetSpec",
    "adam_step",
    "build",
    "copy_params",
    "grad",
    "input_gradient",
    "no_grad",
    "tensor",
    "value_and_grad",
]
