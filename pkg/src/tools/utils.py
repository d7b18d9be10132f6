import math
from typing import Optional

import mpmath
import numpy as np

from src.vtd import numkernel as nk
from src.vtd.collocation import CollocationConfig, march_collocation
from src.vtd.postprocess import PostprocessMode, multi_postprocess
from src.vtd.problem import OdeProblem
from src.vtd.quadrature import VtdQuadrature, build_rule, verify_exactness
from src.vtd.solver import MeshSolution, NewtonSettings, VtdConfig, march, uniform_mesh



def number(x):
    """Plain float in double mode, a decimal string with all significant digits in extended mode."""
    ctx = nk.active()
    if ctx.extended:
        return mpmath.nstr(x, int(ctx.config.bits * math.log10(2)))
    value = float(x)
    return None if math.isnan(value) else value


def numbers(values) -> list:
    return [number(x) for x in np.asarray(values).ravel()]


def rule_payload(rule: VtdQuadrature) -> dict:
    """Nodes with their value weights, plus the full derivative weight vectors at both ends."""
    ctx = nk.active()
    left_nodes = [ctx.scalar(-1)] if rule.left_orders else []
    left_value_weights = list(rule.left_weights[:1])
    return {
        "r": rule.r,
        "k": rule.k,
        "exactness_degree": rule.exactness_degree,
        "nodes": numbers(left_nodes + list(rule.nodes) + [ctx.scalar(1)]),
        "weights": numbers(left_value_weights + list(rule.interior_weights) + [rule.right_weights[0]]),
        "left_weights": numbers(rule.left_weights),
        "interior_nodes": numbers(rule.nodes),
        "interior_weights": numbers(rule.interior_weights),
        "right_weights": numbers(rule.right_weights),
    }


def quadrature_payload(r: int, k: int) -> dict:
    rule = build_rule(r, k)
    return {**rule_payload(rule), "exactness": verify_exactness(rule).to_dict()}


def solution_rows(sol: MeshSolution, points_per_interval: int, prefix: str = "u") -> list[dict]:
    times, values = sol.samples(points_per_interval)
    return [
        {"t": number(t), **{f"{prefix}{i + 1}": number(v) for i, v in enumerate(row)}}
        for t, row in zip(times, values)
    ]


def solve_payload(
    problem: OdeProblem,
    cfg: VtdConfig,
    N: int,
    method: str = "vtd",
    postprocess: Optional[PostprocessMode] = None,
    settings: Optional[NewtonSettings] = None,
    samples_per_interval: int = 11,
) -> dict:
    mesh = uniform_mesh(problem, N)
    if method == "collocation":
        sol = march_collocation(CollocationConfig(r=cfg.r, k=cfg.k), problem, mesh, settings)
    else:
        sol = march(cfg, problem, mesh, settings)
    payload = {
        "problem": problem.name,
        "method": method,
        "r": cfg.r,
        "k": cfg.k,
        "integrator": cfg.integrator,
        "N": N,
        "t_end": number(problem.t_end),
        "endpoint": numbers(sol.endpoint_values()[-1]),
        "mesh_values": [numbers(v) for v in sol.endpoint_values()],
        "samples": solution_rows(sol, samples_per_interval),
    }
    if postprocess is not None:
        history = multi_postprocess(sol, problem, cfg.r, cfg.k, postprocess)
        payload["postprocess"] = {
            "variant": postprocess.variant,
            "steps": postprocess.steps,
            "endpoint": numbers(history.solution.endpoint_values()[-1]),
            "samples": solution_rows(history.solution, samples_per_interval, prefix="pp_u"),
        }
    return payload

