from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional

import numpy as np

from excecoes import ShapeError
from Tensor import Tensor


@dataclass
class AdamState:
    """Momentos de primeira e segunda ordem por parâmetro e contador de passos."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Mapping[str, Tensor],
              grads: Mapping[str, Optional[np.ndarray]],
              state: AdamState,
              lr: float,
              beta1: float = 0.9,
              beta2: float = 0.999,
              eps_opt: float = 1e-8,
              frozen: Iterable[str] = ()) -> AdamState:
    """
    Um passo de Adam com correção de viés, aplicado no lugar.

    Parâmetros em `frozen` (ex.: q-matrix fixa na segunda fase) não são tocados,
    nem seus momentos. Gradiente ausente conta como zero.

    Args:
        params: nome -> Tensor treinável
        grads: nome -> gradiente (mesma forma) ou None
        state: estado do otimizador (alterado e devolvido)
        lr, beta1, beta2, eps_opt: hiperparâmetros do Adam

    Returns:
        O estado atualizado

    Raises:
        ShapeError: se um gradiente não tiver a forma do parâmetro
    """
    congelados = set(frozen)
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t

    for nome, p in params.items():
        if nome in congelados:
            continue
        g = grads.get(nome)
        if g is None:
            g = np.zeros_like(p.values)
        elif g.shape != p.shape:
            raise ShapeError(f"Gradiente de '{nome}' com forma {g.shape}, parâmetro {p.shape}")

        if nome not in state.m:
            state.m[nome] = np.zeros_like(p.values)
            state.v[nome] = np.zeros_like(p.values)

        m = state.m[nome]
        v = state.v[nome]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)

        passo = (lr / bc1) * m / (np.sqrt(v / bc2) + eps_opt)
        p.values = (p.values - passo).astype(p.dtype)

    return state


class AdamOptimizer:
    """
    Otimizador Adam sobre um dicionário de parâmetros nomeados.
    Lê o gradiente acumulado em cada Tensor (`.grad`).
    """

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self, params: Mapping[str, Tensor], frozen: Iterable[str] = ()) -> None:
        grads = {nome: p.grad for nome, p in params.items()}
        adam_step(params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps, frozen)

    @staticmethod
    def zero_grad(params: Mapping[str, Tensor]) -> None:
        for p in params.values():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Estado serializável (para checkpoints)."""
        saida = {"__t__": np.array(self.state.t)}
        for nome in self.state.m:
            saida[f"m::{nome}"] = self.state.m[nome]
            saida[f"v::{nome}"] = self.state.v[nome]
        return saida

    def load_state_dict(self, dados: Mapping[str, np.ndarray]) -> None:
        self.state = AdamState(t=int(dados.get("__t__", 0)))
        for chave, valor in dados.items():
            if chave.startswith("m::"):
                self.state.m[chave[3:]] = np.array(valor)
            elif chave.startswith("v::"):
                self.state.v[chave[3:]] = np.array(valor)
