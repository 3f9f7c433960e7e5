"""
Motor de diferenciação automática em modo reverso sobre arrays numpy.

Oferece apenas as operações que o grafo do QAKT precisa: produto matricial,
operações elemento a elemento, softmax com máscara, normalização de camada,
dropout e algumas operações estruturais (soma, reshape, concatenação, gather).

Cada operação executada recebe um número de sequência crescente. O backward
percorre os nós alcançáveis a partir da saída em ordem exatamente inversa
à de execução (ComputationTape) e soma as contribuições de cada caminho no
gradiente de cada parâmetro, nunca sobrescreve.
"""

import itertools
import os
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from excecoes import ConfigError, MaskError, NumericError, ShapeError


# Menor denominador admitido pela divisão segura
SAFE_DIV_MIN = 1e-8
LAYER_NORM_EPS = 1e-5

DTYPES = {"float32": np.float32, "float64": np.float64}

_sequencia = itertools.count()
_debug = os.environ.get("QAKT_DEBUG", "0") == "1"


def set_debug(ativo: bool) -> None:
    """Liga/desliga a verificação de NaN/Inf após cada operação."""
    global _debug
    _debug = bool(ativo)


class Tensor:
    """
    Array numpy com gradiente acumulável.

    Atributos:
        values: valores (np.ndarray de ponto flutuante)
        requires_grad: se o gradiente deve ser calculado para este nó
        grad: acumulador de mesma forma que values (None até o primeiro backward)
        name: rótulo opcional, usado em relatórios
    """

    __slots__ = ("values", "requires_grad", "grad", "name", "_parents", "_backward", "_seq", "_op")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.values = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable] = None
        self._seq = next(_sequencia)
        self._op = "leaf"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        """Mesmos valores, fora do grafo."""
        return Tensor(self.values, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Propaga o gradiente desta saída para todas as folhas que o exigem."""
        ComputationTape(self).backward(grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # Operadores
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class ComputationTape:
    """
    Registro ordenado das operações que levam a uma saída.

    Os nós são ordenados pelo número de sequência de execução; o backward
    visita-os do último para o primeiro.
    """

    def __init__(self, saida: Tensor):
        self.saida = saida
        nos: Dict[int, Tensor] = {}
        pilha = [saida]
        while pilha:
            no = pilha.pop()
            if id(no) in nos:
                continue
            nos[id(no)] = no
            pilha.extend(p for p in no._parents if p.requires_grad)
        self.registros: List[Tensor] = sorted(nos.values(), key=lambda n: n._seq)

    def __len__(self) -> int:
        return len(self.registros)

    def ordem_reversa(self) -> List[Tensor]:
        return list(reversed(self.registros))

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if not self.saida.requires_grad:
            return
        if grad is None:
            grad = np.ones_like(self.saida.values)
        else:
            grad = np.asarray(grad, dtype=self.saida.dtype)
            if grad.shape != self.saida.shape:
                raise ShapeError(f"Gradiente de forma {grad.shape} para saída de forma {self.saida.shape}")

        pendentes: Dict[int, np.ndarray] = {id(self.saida): grad}
        for no in self.ordem_reversa():
            g = pendentes.pop(id(no), None)
            if g is None:
                continue
            if not no._parents:
                # Folha: acumula no gradiente persistente
                no.grad = np.array(g, dtype=no.dtype) if no.grad is None else no.grad + g
                continue
            for pai, g_pai in zip(no._parents, no._backward(g)):
                if g_pai is None or not pai.requires_grad:
                    continue
                chave = id(pai)
                pendentes[chave] = g_pai if chave not in pendentes else pendentes[chave] + g_pai


# Funções auxiliares

def _como_tensor(x, referencia: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = referencia.dtype if referencia is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _novo(values: np.ndarray, pais: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(values)
    out._op = op
    if any(p.requires_grad for p in pais):
        out.requires_grad = True
        out._parents = tuple(pais)
        out._backward = backward
    if _debug and not np.all(np.isfinite(out.values)):
        raise NumericError(f"Valor não finito produzido pela operação '{op}' (forma {out.shape})")
    return out


def _reduzir_broadcast(grad: np.ndarray, forma: Tuple[int, ...]) -> np.ndarray:
    """Soma o gradiente sobre os eixos que sofreram broadcast."""
    while grad.ndim > len(forma):
        grad = grad.sum(axis=0)
    for eixo, n in enumerate(forma):
        if n == 1 and grad.shape[eixo] != 1:
            grad = grad.sum(axis=eixo, keepdims=True)
    return grad


def _verificar_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"Formas incompatíveis em '{op}': {a.shape} e {b.shape}") from None


def _binaria(a, b, op: str):
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a = _como_tensor(a, b)
    a = _como_tensor(a)
    b = _como_tensor(b, a)
    _verificar_broadcast(a, b, op)
    return a, b


# Operações elemento a elemento

def add(a, b) -> Tensor:
    a, b = _binaria(a, b, "add")

    def backward(g):
        return _reduzir_broadcast(g, a.shape), _reduzir_broadcast(g, b.shape)

    return _novo(a.values + b.values, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _binaria(a, b, "sub")

    def backward(g):
        return _reduzir_broadcast(g, a.shape), _reduzir_broadcast(-g, b.shape)

    return _novo(a.values - b.values, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _binaria(a, b, "mul")

    def backward(g):
        return _reduzir_broadcast(g * b.values, a.shape), _reduzir_broadcast(g * a.values, b.shape)

    return _novo(a.values * b.values, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    """
    Divisão segura: o denominador é limitado inferiormente por SAFE_DIV_MIN.
    Pensada para denominadores não negativos (somas de relevâncias, desvios).
    """
    a, b = _binaria(a, b, "div")
    den = np.maximum(b.values, SAFE_DIV_MIN)
    ativo = b.values >= SAFE_DIV_MIN

    def backward(g):
        ga = g / den
        gb = np.where(ativo, -g * a.values / (den * den), 0.0)
        return _reduzir_broadcast(ga, a.shape), _reduzir_broadcast(gb, b.shape)

    return _novo(a.values / den, (a, b), backward, "div")


def neg(x) -> Tensor:
    x = _como_tensor(x)
    return _novo(-x.values, (x,), lambda g: (-g,), "neg")


def sigmoid(x) -> Tensor:
    x = _como_tensor(x)
    s = expit(x.values)
    return _novo(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def relu(x) -> Tensor:
    x = _como_tensor(x)
    # relu'(0) = 0
    positivo = x.values > 0
    return _novo(np.where(positivo, x.values, 0.0).astype(x.dtype), (x,),
                 lambda g: (g * positivo,), "relu")


def exp(x) -> Tensor:
    x = _como_tensor(x)
    e = np.exp(x.values)
    return _novo(e, (x,), lambda g: (g * e,), "exp")


def log(x) -> Tensor:
    x = _como_tensor(x)
    return _novo(np.log(x.values), (x,), lambda g: (g / x.values,), "log")


def abs_(x) -> Tensor:
    x = _como_tensor(x)
    return _novo(np.abs(x.values), (x,), lambda g: (g * np.sign(x.values),), "abs")


def clip(x, minimo: float, maximo: float) -> Tensor:
    x = _como_tensor(x)
    dentro = (x.values >= minimo) & (x.values <= maximo)
    return _novo(np.clip(x.values, minimo, maximo), (x,), lambda g: (g * dentro,), "clip")


_ELEMENTWISE = {
    "sigmoid": sigmoid,
    "relu": relu,
    "exp": exp,
    "neg": neg,
    "abs": abs_,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
}


def elementwise(op_kind: str, *args) -> Tensor:
    """
    Despacha uma operação elemento a elemento pelo nome.

    Args:
        op_kind: um de sigmoid, relu, exp, neg, abs, add, sub, mul, div
        *args: operandos (Tensors ou escalares/arrays)

    Raises:
        ValueError: se op_kind for desconhecido
        ShapeError: se as formas não admitirem broadcast
    """
    try:
        fn = _ELEMENTWISE[op_kind]
    except KeyError:
        raise ValueError(f"Operação elemento a elemento desconhecida: {op_kind}") from None
    return fn(*args)


# Álgebra linear e estrutura

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Produto matricial (com broadcast sobre eixos de lote).

    Raises:
        ShapeError: se as dimensões internas não concordarem
    """
    a = _como_tensor(a)
    b = _como_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"Produto matricial incompatível: {a.shape} @ {b.shape}")
    try:
        valores = np.matmul(a.values, b.values)
    except ValueError:
        raise ShapeError(f"Produto matricial incompatível: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.values, -1, -2))
        gb = np.matmul(np.swapaxes(a.values, -1, -2), g)
        return _reduzir_broadcast(ga, a.shape), _reduzir_broadcast(gb, b.shape)

    return _novo(valores, (a, b), backward, "matmul")


def sum_(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = _como_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _novo(np.asarray(x.values.sum(axis=axis, keepdims=keepdims)), (x,), backward, "sum")


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = _como_tensor(x)
    n = x.values.size if axis is None else x.shape[axis]
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / max(n, 1))


def reshape(x: Tensor, forma: Sequence[int]) -> Tensor:
    x = _como_tensor(x)
    try:
        valores = x.values.reshape(forma)
    except ValueError:
        raise ShapeError(f"Não é possível remodelar {x.shape} para {tuple(forma)}") from None
    return _novo(valores, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def permute(x: Tensor, eixos: Sequence[int]) -> Tensor:
    x = _como_tensor(x)
    inversa = np.argsort(eixos)
    return _novo(np.transpose(x.values, eixos), (x,), lambda g: (np.transpose(g, inversa),), "permute")


def transpose(x: Tensor) -> Tensor:
    """Troca os dois últimos eixos."""
    x = _como_tensor(x)
    return _novo(np.swapaxes(x.values, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def concat(tensores: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensores = [_como_tensor(t) for t in tensores]
    try:
        valores = np.concatenate([t.values for t in tensores], axis=axis)
    except ValueError:
        raise ShapeError(f"Concatenação incompatível: {[t.shape for t in tensores]}") from None
    cortes = np.cumsum([t.shape[axis] for t in tensores])[:-1]

    def backward(g):
        return tuple(np.split(g, cortes, axis=axis))

    return _novo(valores, tensores, backward, "concat")


def take(x: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
    """
    Gather: seleciona fatias de x ao longo de `axis` (como np.take).
    O backward soma em posições repetidas.
    """
    x = _como_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[axis]):
        raise IndexError(f"Índice fora do intervalo [0, {x.shape[axis] - 1}] no eixo {axis}")

    def backward(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, (slice(None),) * axis + (indices,), g)
        return (gx,)

    return _novo(np.take(x.values, indices, axis=axis), (x,), backward, "take")


def cumsum(x: Tensor, axis: int = -1) -> Tensor:
    x = _como_tensor(x)

    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _novo(np.cumsum(x.values, axis=axis), (x,), backward, "cumsum")


# Operações compostas

def softmax_masked(scores: Tensor, mask: np.ndarray) -> Tensor:
    """
    Softmax no último eixo considerando apenas posições admissíveis.

    Posições mascaradas recebem probabilidade exatamente 0; a estabilidade
    numérica vem da subtração do máximo da linha (somente sobre admissíveis).

    Args:
        scores: tensor de pontuações
        mask: array booleano com broadcast para scores (True = admissível)

    Raises:
        MaskError: se alguma linha não tiver posição admissível
    """
    scores = _como_tensor(scores)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    if scores.ndim == 0 or not np.all(mask.any(axis=-1)):
        raise MaskError("Linha totalmente mascarada no softmax: nenhuma posição admissível")
    s = np.where(mask, scores.values, -np.inf)
    maximo = s.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(s - maximo), 0.0)
    p = (e / e.sum(axis=-1, keepdims=True)).astype(scores.dtype)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _novo(p, (scores,), backward, "softmax_masked")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, epsilon: float = LAYER_NORM_EPS) -> Tensor:
    """
    Normalização de camada no último eixo, seguida de ganho e viés treináveis.

    Raises:
        ShapeError: se o eixo de atributos tiver tamanho 0
        ConfigError: se epsilon <= 0
    """
    x = _como_tensor(x)
    gain = _como_tensor(gain, x)
    bias = _como_tensor(bias, x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError(f"Normalização de camada sobre eixo vazio: {x.shape}")
    if epsilon <= 0:
        raise ConfigError("epsilon da normalização de camada deve ser > 0")
    _verificar_broadcast(x, gain, "layer_norm")
    media = x.values.mean(axis=-1, keepdims=True)
    centrado = x.values - media
    inv_desvio = 1.0 / np.sqrt((centrado * centrado).mean(axis=-1, keepdims=True) + epsilon)
    xhat = centrado * inv_desvio
    valores = xhat * gain.values + bias.values

    def backward(g):
        gxhat = g * gain.values
        gx = inv_desvio * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                           - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return (gx,
                _reduzir_broadcast(g * xhat, gain.shape),
                _reduzir_broadcast(g, bias.shape))

    return _novo(valores.astype(x.dtype), (x, gain, bias), backward, "layer_norm")


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """
    Dropout invertido: no treino zera cada elemento com probabilidade `rate`
    e escala os sobreviventes por 1/(1-rate); na avaliação é a identidade.

    Raises:
        ConfigError: se rate estiver fora de [0, 1)
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"Taxa de dropout inválida: {rate} (esperado 0 <= rate < 1)")
    x = _como_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("Dropout em modo de treino exige um gerador aleatório")
    escala = (rng.random(x.shape) >= rate) / (1.0 - rate)
    escala = escala.astype(x.dtype)
    return _novo(x.values * escala, (x,), lambda g: (g * escala,), "dropout")


def constante(valores, dtype=None) -> Tensor:
    """Tensor fora do grafo (sem gradiente)."""
    return Tensor(valores, requires_grad=False, dtype=dtype)


def parametro(valores, name: str, dtype=np.float32) -> Tensor:
    """Tensor folha treinável."""
    return Tensor(np.array(valores, dtype=dtype), requires_grad=True, name=name)


