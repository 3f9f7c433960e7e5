from abc import ABC, abstractmethod
from typing import Dict, Optional

import numpy as np

from excecoes import ConfigError, ShapeError
from Tensor import Tensor, parametro


class AbstractModule(ABC):
    """
    Classe abstrata que define a API comum para os componentes treináveis do QAKT
    (embedding, atenção, rede de predição).
    Guarda os parâmetros nomeados, o modo treino/avaliação e métodos auxiliares.
    """

    def __init__(self, dim: int, dtype=np.float32):
        """
        Construtor base.

        Args:
            dim: Dimensão de embedding D do componente
            dtype: Precisão dos parâmetros (float32 no treino, float64 no gradcheck)

        Raises:
            ConfigError: Se dim for menor ou igual a 0
        """
        if dim <= 0:
            raise ConfigError("Dimensão de embedding deve ser maior que 0")

        self._dim = dim
        self._dtype = dtype
        self._params: Dict[str, Tensor] = {}
        self._submodulos: Dict[str, "AbstractModule"] = {}
        self.training = True

    def _novo_parametro(self, nome: str, valores) -> Tensor:
        """Registra um parâmetro treinável com o nome dado."""
        t = parametro(valores, name=nome, dtype=self._dtype)
        self._params[nome] = t
        return t

    def _registrar(self, nome: str, modulo: "AbstractModule") -> "AbstractModule":
        """Registra um subcomponente; seus parâmetros aparecem com o prefixo `nome.`."""
        self._submodulos[nome] = modulo
        return modulo

    def _glorot(self, rng: np.random.Generator, forma, fan_in: int, fan_out: int) -> np.ndarray:
        limite = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limite, limite, size=forma)

    def _validate_features(self, x: Tensor, esperado: int, nome: str) -> None:
        """
        Valida o tamanho do último eixo de uma entrada.

        Raises:
            ShapeError: Se o último eixo não tiver o tamanho esperado
        """
        if x.ndim == 0 or x.shape[-1] != esperado:
            raise ShapeError(f"{nome}: esperado último eixo {esperado}, recebido forma {x.shape}")

    # Métodos abstratos que devem ser implementados pelas classes concretas

    @abstractmethod
    def reset_parameters(self, rng: np.random.Generator) -> None:
        """(Re)inicializa todos os parâmetros."""
        pass

    @abstractmethod
    def forward(self, *args, **kwargs):
        """Aplica o componente."""
        pass

    # Métodos implementados na classe base

    def parameters(self, prefixo: str = "") -> Dict[str, Tensor]:
        """Parâmetros nomeados, com prefixo opcional."""
        todos = {prefixo + nome: t for nome, t in self._params.items()}
        for nome, modulo in self._submodulos.items():
            todos.update(modulo.parameters(f"{prefixo}{nome}."))
        return todos

    def parameter_count(self) -> int:
        return int(sum(t.values.size for t in self.parameters().values()))

    def train(self, modo: bool = True) -> None:
        self.training = modo
        for modulo in self._submodulos.values():
            modulo.train(modo)

    def eval(self) -> None:
        self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def resumo(self, titulo: Optional[str] = None) -> str:
        """Texto com os parâmetros e suas formas."""
        linhas = [titulo or type(self).__name__]
        for nome, t in self.parameters().items():
            linhas.append(f"  {nome:<24} {str(t.shape):<16} {t.values.size}")
        linhas.append(f"  total: {self.parameter_count()}")
        return "\n".join(linhas)
