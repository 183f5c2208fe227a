"""Flow matching surrogates for stochastic dynamical systems, with a small
numpy autodiff core, fixed-step ODE solvers, few-step distillation, toy
physics generators and evaluation metrics."""

__version__ = "0.1.0"
