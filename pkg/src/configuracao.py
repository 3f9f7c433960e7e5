"""
Configuração de execução (RunConfig) e de geração sintética (SyntheticSpec).

Ambas são lidas de arquivos YAML; chaves desconhecidas são rejeitadas e todos
os campos numéricos são validados na carga. Flags da linha de comando
sobrescrevem os valores do arquivo.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional

import yaml

from excecoes import ConfigError

logger = logging.getLogger(__name__)

# Raiz padrão das saídas; pode ser trocada pela variável de ambiente
OUTPUT_ROOT_ENV = "QAKT_OUTPUT_ROOT"

BINARIZE_RULES = ("threshold-ge", "threshold-lt")
BINARIZE_AXES = ("question-column", "skill-row")
RESPONSE_LN_MODES = ("joint", "per-half")
RETRIEVER_VALUE_MODES = ("nonsquare", "preproject")
PRECISIONS = ("float32", "float64")


def default_output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, "run")


@dataclass
class RunConfig:
    """Hiperparâmetros e caminhos de uma execução."""
    # Dimensões (n_questions é derivado dos dados quando None)
    n_skills: int = 10
    n_questions: Optional[int] = None
    dim: int = 64
    heads: int = 8
    n_blocks: int = 1
    slice_length: int = 200
    # Otimização
    batch_size: int = 24
    max_epochs: int = 300
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    patience: int = 10
    early_stopping: bool = True
    # Perdas
    beta: float = 1.0
    beta_phase2: float = 0.0
    lam: float = 1e-5
    # Binarização
    eta: float = 0.99
    binarize_rule: str = "threshold-ge"
    # None: eixo padrão da regra (skill-row para threshold-lt, question-column para threshold-ge)
    binarize_axis: Optional[str] = None
    guarantee_min_one_skill: Optional[bool] = None
    # Dropout
    embedding_dropout: float = 0.05
    prediction_dropout: float = 0.05
    # Ablações e variantes
    no_act: bool = False
    no_avg: bool = False
    no_ln: bool = False
    mu_both_halves: bool = True
    response_layer_norm: str = "joint"
    distance_gradient: bool = False
    retriever_value: str = "nonsquare"
    # Protocolo
    folds: int = 5
    seed: int = 0
    precision: str = "float32"
    jobs: int = 1
    # Caminhos
    data: Optional[str] = None
    qmatrix: Optional[str] = None
    output_root: str = field(default_factory=default_output_root)
    name: str = "qakt"

    def validate(self) -> "RunConfig":
        """
        Valida todos os campos.

        Raises:
            ConfigError: Se algum valor for inválido
        """
        _coagir_floats(self, ("lr", "beta1", "beta2", "eps_opt", "beta", "beta_phase2", "lam", "eta",
                              "embedding_dropout", "prediction_dropout"))
        inteiros_positivos = ("n_skills", "dim", "heads", "n_blocks", "batch_size",
                              "max_epochs", "patience", "folds", "jobs")
        for nome in inteiros_positivos:
            valor = getattr(self, nome)
            if not isinstance(valor, int) or isinstance(valor, bool) or valor <= 0:
                raise ConfigError(f"{nome} deve ser inteiro > 0, recebido {valor!r}")
        if self.n_questions is not None and (not isinstance(self.n_questions, int) or self.n_questions <= 0):
            raise ConfigError(f"n_questions deve ser inteiro > 0, recebido {self.n_questions!r}")
        if not isinstance(self.slice_length, int) or self.slice_length < 2:
            raise ConfigError(f"slice_length deve ser >= 2, recebido {self.slice_length!r}")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim ({self.dim}) deve ser divisível por heads ({self.heads})")
        if self.dim < 2 or self.dim % 2 != 0:
            raise ConfigError(f"dim deve ser par e >= 2 (rede de predição usa dim/2), recebido {self.dim}")
        if self.folds < 3:
            raise ConfigError("folds deve ser >= 3 (treino, validação e teste)")
        if self.lr <= 0:
            raise ConfigError(f"lr deve ser > 0, recebido {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0) or self.eps_opt <= 0:
            raise ConfigError("beta1/beta2 devem estar em [0, 1) e eps_opt > 0")
        for nome in ("beta", "beta_phase2", "lam"):
            if getattr(self, nome) < 0:
                raise ConfigError(f"{nome} deve ser >= 0")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta deve estar em (0, 1], recebido {self.eta}")
        for nome in ("embedding_dropout", "prediction_dropout"):
            if not 0.0 <= getattr(self, nome) < 1.0:
                raise ConfigError(f"{nome} deve estar em [0, 1)")
        escolhas = {
            "binarize_rule": BINARIZE_RULES,
            "response_layer_norm": RESPONSE_LN_MODES,
            "retriever_value": RETRIEVER_VALUE_MODES,
            "precision": PRECISIONS,
        }
        for nome, opcoes in escolhas.items():
            if getattr(self, nome) not in opcoes:
                raise ConfigError(f"{nome} deve ser um de {opcoes}, recebido {getattr(self, nome)!r}")
        if self.binarize_axis is not None and self.binarize_axis not in BINARIZE_AXES:
            raise ConfigError(f"binarize_axis deve ser um de {BINARIZE_AXES}, recebido {self.binarize_axis!r}")
        return self

    def with_overrides(self, **valores) -> "RunConfig":
        """Cópia com os valores dados (None é ignorado); valida o resultado."""
        return _aplicar(self, valores).validate()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SyntheticSpec:
    """Parâmetros do gerador DINA de dados sintéticos."""
    n_skills: int = 5
    n_questions: int = 50
    students: int = 300
    interactions: int = 100
    slip: float = 0.1
    guess: float = 0.1
    p_master: float = 0.5
    q_density: float = 0.3
    learn_rate: float = 0.0
    seed: int = 0

    def validate(self) -> "SyntheticSpec":
        """
        Raises:
            ConfigError: Se algum parâmetro violar as restrições
        """
        _coagir_floats(self, ("slip", "guess", "p_master", "q_density", "learn_rate"))
        for nome in ("n_skills", "n_questions", "students", "interactions"):
            valor = getattr(self, nome)
            if not isinstance(valor, int) or valor <= 0:
                raise ConfigError(f"{nome} deve ser inteiro > 0, recebido {valor!r}")
        if not (0.0 <= self.slip <= 0.5 and 0.0 <= self.guess <= 0.5):
            raise ConfigError(f"slip e guess devem estar em [0, 0.5]: s={self.slip}, g={self.guess}")
        for nome in ("p_master", "q_density", "learn_rate"):
            if not 0.0 <= getattr(self, nome) <= 1.0:
                raise ConfigError(f"{nome} deve estar em [0, 1]")
        return self


def _coagir_floats(obj, nomes) -> None:
    # YAML lê "1e-4" (sem ponto) como texto
    for nome in nomes:
        valor = getattr(obj, nome)
        if isinstance(valor, bool):
            raise ConfigError(f"{nome} deve ser numérico, recebido {valor!r}")
        try:
            setattr(obj, nome, float(valor))
        except (TypeError, ValueError):
            raise ConfigError(f"{nome} deve ser numérico, recebido {valor!r}") from None


def _aplicar(base, valores: Mapping[str, Any]):
    conhecidos = {f.name for f in fields(base)}
    desconhecidos = sorted(set(valores) - conhecidos)
    if desconhecidos:
        raise ConfigError(f"Chaves de configuração desconhecidas: {', '.join(desconhecidos)}")
    return replace(base, **{k: v for k, v in valores.items() if v is not None})


def _ler_yaml(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"Arquivo de configuração não encontrado: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            dados = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML inválido em {path}: {e}") from e
    if not isinstance(dados, dict):
        raise ConfigError(f"{path} deve conter um mapeamento chave: valor")
    return dados


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Carrega um RunConfig de YAML e aplica as sobrescritas (flags vencem).

    Args:
        path: Arquivo YAML (opcional; sem arquivo usa os padrões)
        overrides: Valores vindos de flags; None significa "não informado"

    Raises:
        ConfigError: Chave desconhecida ou valor inválido
    """
    cfg = RunConfig()
    if path:
        cfg = _aplicar(cfg, _ler_yaml(path))
    if overrides:
        cfg = _aplicar(cfg, overrides)
    logger.debug("Configuração carregada: %s", cfg)
    return cfg.validate()


def load_synthetic_spec(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> SyntheticSpec:
    spec = SyntheticSpec()
    if path:
        spec = _aplicar(spec, _ler_yaml(path))
    if overrides:
        spec = _aplicar(spec, overrides)
    return spec.validate()


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=True, allow_unicode=True)


def config_hash(cfg) -> str:
    """Hash curto (12 hex) do JSON canônico da configuração."""
    dados = asdict(cfg)
    # Caminhos de saída não mudam o experimento
    dados.pop("output_root", None)
    canonico = json.dumps(dados, sort_keys=True, default=str)
    return hashlib.sha256(canonico.encode("utf-8")).hexdigest()[:12]


def header_comment(cfg, seed: Optional[int] = None) -> str:
    """Linha de comentário gravada no topo de todo arquivo de saída."""
    semente = cfg.seed if seed is None else seed
    return f"# qakt config_hash={config_hash(cfg)} seed={semente}"


def parse_int_list(texto: Optional[str]) -> Optional[List[int]]:
    """'5,10,20' -> [5, 10, 20]."""
    if texto is None or texto == "":
        return None
    try:
        return [int(x) for x in texto.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"Lista de inteiros inválida: {texto!r}") from None
