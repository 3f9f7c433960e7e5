"""
Treino em duas fases, avaliação e protocolo de validação cruzada.

Fase 1: aprende P (W_p treinável) com L = L_p + β L_s + λ L_c.
Binarização: P -> q-matrix.
Fase 2: q-matrix fixa, demais parâmetros reinicializados e retreinados
com β da fase 2 (0 por padrão).
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from AdamOptimizer import AdamOptimizer
from binarizacao import BinarizationConfig, binarize
from configuracao import RunConfig
from dados import InteractionLog, StudentSequence, batches, kfold, sequences_for, slice_sequences
from excecoes import ConfigError, NumericError, UndefinedMetricError
from metricas import auc, mean_and_std
from perdas import LossConfig, perdas_modelo
from QAKTModel import ModelParams, QAKTModel
from QMatrix import QMatrix

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["variant", "n_skills", "fold", "phase", "epoch", "split",
                   "L_p", "L_p_mean", "L_s", "L_c", "L", "AUC"]

ABLATIONS = {
    "QAKT": {},
    "QAKT-NoAct": {"no_act": True},
    "QAKT-NoAvg": {"no_avg": True},
    "QAKT-NoLN": {"no_ln": True},
}


class EarlyStopping:
    """
    Parada antecipada pela AUC de validação: guarda o melhor estado e para
    após `patience` épocas sem melhora estrita.
    """

    def __init__(self, patience: int = 10, enabled: bool = True):
        if patience <= 0:
            raise ConfigError(f"patience deve ser > 0, recebido {patience}")
        self.patience = patience
        self.enabled = enabled
        self.best_auc = -np.inf
        self.best_epoch = 0
        self.best_state: Optional[Dict[str, np.ndarray]] = None
        self.sem_melhora = 0

    def update(self, epoch: int, valor: float, params: ModelParams) -> bool:
        """Registra a AUC da época; devolve True quando o treino deve parar."""
        if np.isfinite(valor) and valor > self.best_auc:
            self.best_auc = float(valor)
            self.best_epoch = epoch
            self.best_state = params.snapshot()
            self.sem_melhora = 0
            return False
        self.sem_melhora += 1
        return self.enabled and self.sem_melhora >= self.patience

    def restore(self, params: ModelParams) -> bool:
        """Instala o melhor estado visto (nada se nenhum foi registrado)."""
        if self.best_state is None:
            return False
        params.restore(self.best_state)
        return True


@dataclass
class HistoryRow:
    phase: int
    epoch: int
    split: str
    L_p: float
    L_p_mean: float
    L_s: float
    L_c: float
    L: float
    AUC: float
    fold: int = 0
    variant: str = "QAKT"
    n_skills: int = 0

    def as_dict(self) -> Dict[str, object]:
        return {c: getattr(self, c) for c in HISTORY_COLUMNS}


@dataclass
class EvaluationResult:
    predictions: np.ndarray
    labels: np.ndarray
    auc: float
    L_p: float = 0.0
    L_p_mean: float = 0.0
    L_s: float = 0.0
    L_c: float = 0.0
    L: float = 0.0


@dataclass
class PhaseResult:
    history: List[HistoryRow]
    best_auc: float
    best_epoch: int
    epochs_run: int
    stopped_early: bool
    optimizer: Optional[AdamOptimizer] = None
    rng: Optional[np.random.Generator] = None


def _auc_ou_nan(scores, labels) -> float:
    try:
        return auc(scores, labels)
    except UndefinedMetricError:
        return float("nan")


def evaluate(model: QAKTModel, sequences: Sequence[StudentSequence], batch_size: int = 24,
             loss_config: Optional[LossConfig] = None, strict: bool = False) -> EvaluationResult:
    """
    Avalia o modelo em modo de avaliação: predições das posições reais
    agrupadas, AUC e perdas somadas.

    Args:
        strict: levanta UndefinedMetricError se houver uma só classe
            (caso contrário a AUC fica NaN)
    """
    loss_config = loss_config or LossConfig()
    modo = model.training
    model.eval()
    preds, rotulos = [], []
    L_p = L_s = L = 0.0
    L_c = 0.0
    try:
        for lote in batches(sequences, batch_size):
            r_hat, codificado = model(lote.questions, lote.responses, lote.mask)
            total, lp, _, ls, lc = perdas_modelo(model, r_hat, codificado, lote.responses, loss_config)
            L_p += float(lp.values)
            L_s += float(ls.values)
            L_c = float(lc.values)
            L += float(total.values)
            preds.append(r_hat.values[lote.mask])
            rotulos.append(lote.responses[lote.mask])
    finally:
        model.train(modo)

    predicoes = np.concatenate(preds).astype(np.float64) if preds else np.zeros(0)
    labels = np.concatenate(rotulos) if rotulos else np.zeros(0, dtype=np.int64)
    valor = auc(predicoes, labels) if strict else _auc_ou_nan(predicoes, labels)
    n = max(labels.size, 1)
    return EvaluationResult(predicoes, labels, valor, L_p, L_p / n, L_s, L_c, L)


def frequency_baseline_auc(train: Sequence[StudentSequence], test: Sequence[StudentSequence]) -> float:
    """
    AUC de um preditor que usa a acurácia de cada questão no treino
    (questões não vistas recebem a acurácia global do treino).
    """
    q_treino = np.concatenate([s.questions[s.mask] for s in train])
    r_treino = np.concatenate([s.responses[s.mask] for s in train]).astype(np.float64)
    global_ = float(r_treino.mean()) if r_treino.size else 0.5
    acertos = pd.Series(r_treino).groupby(q_treino).mean()

    q_teste = np.concatenate([s.questions[s.mask] for s in test])
    r_teste = np.concatenate([s.responses[s.mask] for s in test])
    scores = pd.Series(q_teste).map(acertos).fillna(global_).to_numpy()
    return auc(scores, r_teste)


def _diagnostico(params: ModelParams, epoch: int, lote: int) -> str:
    normas = params.norms()
    piores = sorted(normas.items(), key=lambda kv: -np.nan_to_num(kv[1], nan=np.inf))[:5]
    texto = ", ".join(f"{nome}={norma:.3e}" for nome, norma in piores)
    return f"Perda não finita na época {epoch}, lote {lote}. Maiores normas: {texto}"


def train_phase(model: QAKTModel, train: Sequence[StudentSequence], validation: Sequence[StudentSequence],
                cfg: RunConfig, phase: int, rng: np.random.Generator,
                qmatrix: Optional[QMatrix] = None,
                fold: int = 0, variant: str = "QAKT") -> PhaseResult:
    """
    Treina uma fase por gradiente em mini-lotes (Adam), com AUC de
    validação por época e parada antecipada.

    Na fase 2 a q-matrix dada é fixada (ou a já injetada é mantida) e
    todos os outros parâmetros são reinicializados.

    Raises:
        ConfigError: Fase 2 sem q-matrix binária
        NumericError: Perda NaN/Inf (com época, lote e normas dos parâmetros)
    """
    if phase not in (1, 2):
        raise ConfigError(f"Fase deve ser 1 ou 2, recebido {phase}")
    if phase == 2:
        if qmatrix is not None:
            model.inject(qmatrix)
        if not model.qmatrix_frozen:
            raise ConfigError("A fase 2 exige uma q-matrix binária (aprendida ou injetada)")
        model.reset_parameters(rng)

    loss_config = LossConfig.for_phase(cfg, phase)
    otimizador = AdamOptimizer(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt)
    params = model.model_params()
    parada = EarlyStopping(cfg.patience, enabled=cfg.early_stopping)
    historico: List[HistoryRow] = []
    parou = False
    epoca = 0

    for epoca in range(1, cfg.max_epochs + 1):
        model.train()
        soma_p = soma_s = soma_total = 0.0
        lc = 0.0
        preds, rotulos = [], []
        for i, lote in enumerate(batches(train, cfg.batch_size, rng)):
            otimizador.zero_grad(params.tensors)
            r_hat, codificado = model(lote.questions, lote.responses, lote.mask, rng)
            total, L_p, _, L_s, L_c = perdas_modelo(model, r_hat, codificado, lote.responses, loss_config)
            if not np.isfinite(total.values):
                raise NumericError(_diagnostico(params, epoca, i))
            total.backward()
            otimizador.step(params.tensors, frozen=params.frozen)

            soma_p += float(L_p.values)
            soma_s += float(L_s.values)
            soma_total += float(total.values)
            lc = float(L_c.values)
            preds.append(r_hat.values[lote.mask])
            rotulos.append(lote.responses[lote.mask])
            logger.debug("fase %d época %d lote %d: L=%.4f", phase, epoca, i, float(total.values))

        labels = np.concatenate(rotulos) if rotulos else np.zeros(0)
        historico.append(HistoryRow(phase, epoca, "train", soma_p, soma_p / max(labels.size, 1),
                                    soma_s, lc, soma_total,
                                    _auc_ou_nan(np.concatenate(preds) if preds else np.zeros(0), labels),
                                    fold, variant, model.n_skills))

        if validation:
            resultado = evaluate(model, validation, cfg.batch_size, loss_config)
            historico.append(HistoryRow(phase, epoca, "validation", resultado.L_p, resultado.L_p_mean,
                                        resultado.L_s, resultado.L_c, resultado.L, resultado.auc,
                                        fold, variant, model.n_skills))
            logger.info("[%s fold %d] fase %d época %d: L=%.4f AUC val=%.4f",
                        variant, fold, phase, epoca, soma_total, resultado.auc)
            if parada.update(epoca, resultado.auc, params):
                parou = True
                logger.info("Parada antecipada na época %d (melhor época %d, AUC %.4f)",
                            epoca, parada.best_epoch, parada.best_auc)
                break
        else:
            logger.info("[%s fold %d] fase %d época %d: L=%.4f", variant, fold, phase, epoca, soma_total)

    if cfg.early_stopping:
        parada.restore(params)
    return PhaseResult(historico, parada.best_auc, parada.best_epoch, epoca, parou, otimizador, rng)


# Protocolo de experimentos

@dataclass
class FoldResult:
    fold: int
    test_auc: float
    baseline_auc: float
    history: List[HistoryRow] = field(default_factory=list)
    qmatrix: Optional[QMatrix] = None
    best_epochs: Tuple[int, ...] = ()
    model: Optional[QAKTModel] = None
    optimizer: Optional[AdamOptimizer] = None
    rng: Optional[np.random.Generator] = None


@dataclass
class ExperimentBlock:
    """Resultados por fold de uma variante (padrão, ablação ou um N da varredura)."""
    variant: str
    n_skills: int
    folds: List[FoldResult]

    @property
    def fold_aucs(self) -> List[float]:
        return [f.test_auc for f in self.folds]

    @property
    def mean_auc(self) -> float:
        return mean_and_std(self.fold_aucs)[0]

    @property
    def std_auc(self) -> float:
        return mean_and_std(self.fold_aucs)[1]


def fold_rng(seed: int, fold: int, fase: int = 0) -> np.random.Generator:
    """Gerador determinístico por (semente, fold, fase)."""
    return np.random.default_rng(np.random.SeedSequence([seed, fold, fase]))


def run_fold(cfg: RunConfig, fatias: Sequence[StudentSequence], split, n_questions: int,
             question_ids: Optional[List[str]] = None,
             qmatrix: Optional[QMatrix] = None,
             phases: Sequence[int] = (1, 2),
             variant: str = "QAKT",
             keep_model: bool = False) -> FoldResult:
    """
    Um experimento: fase 1 -> binarização -> fase 2 -> AUC de teste.
    Com `qmatrix` a fase 1 é pulada.
    """
    treino = sequences_for(fatias, split.train)
    validacao = sequences_for(fatias, split.validation)
    teste = sequences_for(fatias, split.test)
    fold = split.experiment
    historico: List[HistoryRow] = []
    melhores: List[int] = []
    modelo: Optional[QAKTModel] = None
    ultima: Optional[PhaseResult] = None

    Q = qmatrix
    if Q is None and 1 in phases:
        rng = fold_rng(cfg.seed, fold, 1)
        modelo = QAKTModel.from_config(cfg, n_questions, seed=int(rng.integers(2**31)))
        r1 = train_phase(modelo, treino, validacao, cfg, 1, rng, fold=fold, variant=variant)
        ultima = r1
        historico += r1.history
        melhores.append(r1.best_epoch)
        Q = binarize(modelo.relevance(), BinarizationConfig.from_run_config(cfg), question_ids)

    if 2 in phases:
        if Q is None:
            raise ConfigError("A fase 2 exige uma q-matrix (--qmatrix) ou a fase 1")
        rng = fold_rng(cfg.seed, fold, 2)
        modelo = QAKTModel.from_config(cfg, n_questions, seed=int(rng.integers(2**31)))
        r2 = train_phase(modelo, treino, validacao, cfg, 2, rng, qmatrix=Q, fold=fold, variant=variant)
        ultima = r2
        historico += r2.history
        melhores.append(r2.best_epoch)

    test_auc = evaluate(modelo, teste, cfg.batch_size).auc if teste else float("nan")
    try:
        baseline = frequency_baseline_auc(treino, teste) if teste else float("nan")
    except UndefinedMetricError:
        baseline = float("nan")
    logger.info("[%s] fold %d: AUC teste %.4f (baseline de frequência %.4f)", variant, fold, test_auc, baseline)
    if not keep_model:
        return FoldResult(fold, test_auc, baseline, historico, Q, tuple(melhores))
    return FoldResult(fold, test_auc, baseline, historico, Q, tuple(melhores), modelo,
                      ultima.optimizer if ultima else None, ultima.rng if ultima else None)


def _executar_tarefa(argumentos) -> FoldResult:
    return run_fold(*argumentos)


def experiment_variants(cfg: RunConfig, mode: str = "standard",
                        skills: Optional[Sequence[int]] = None) -> List[Tuple[str, RunConfig]]:
    """
    Configurações de cada bloco do experimento.

    standard: a configuração dada
    ablations: QAKT, NoAct, NoAvg, NoLN, sem parada antecipada
    sweep: um bloco por N, sem parada antecipada e sem dropout na representação
    """
    if mode == "standard":
        return [("QAKT", cfg)]
    if mode == "ablations":
        return [(nome, cfg.with_overrides(early_stopping=False, **flags)) for nome, flags in ABLATIONS.items()]
    if mode == "sweep":
        if not skills:
            raise ConfigError("Varredura exige uma lista de números de habilidades")
        return [(f"QAKT-N{n}", cfg.with_overrides(n_skills=n, early_stopping=False, embedding_dropout=0.0))
                for n in skills]
    raise ConfigError(f"Modo de experimento desconhecido: {mode}")


def run_experiment(log: InteractionLog, cfg: RunConfig,
                   mode: str = "standard",
                   skills: Optional[Sequence[int]] = None,
                   qmatrix: Optional[QMatrix] = None,
                   phases: Sequence[int] = (1, 2)) -> List[ExperimentBlock]:
    """
    Validação cruzada em k folds para cada variante do modo.

    Com cfg.jobs > 1 os folds rodam em processos separados; cada fold tem
    sementes próprias derivadas de cfg.seed e os resultados saem na ordem
    dos folds.
    """
    fatias = slice_sequences(log, cfg.slice_length)
    splits = kfold(log, cfg.folds, cfg.seed)
    variantes = experiment_variants(cfg, mode, skills)

    tarefas = []
    for nome, cfg_v in variantes:
        if qmatrix is not None and qmatrix.getSkillCount() != cfg_v.n_skills:
            raise ConfigError(f"Q-matrix com {qmatrix.getSkillCount()} habilidades, "
                              f"configuração com n_skills={cfg_v.n_skills}")
        for split in splits:
            tarefas.append((cfg_v, fatias, split, log.n_questions, log.question_ids, qmatrix, tuple(phases), nome))

    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, os.cpu_count() or 1)) as executor:
            resultados = list(executor.map(_executar_tarefa, tarefas))
    else:
        resultados = [_executar_tarefa(t) for t in tarefas]

    blocos = []
    for i, (nome, cfg_v) in enumerate(variantes):
        folds = resultados[i * len(splits):(i + 1) * len(splits)]
        bloco = ExperimentBlock(nome, cfg_v.n_skills, folds)
        logger.info("%s (N=%d): AUC média %.4f ± %.4f", nome, cfg_v.n_skills, bloco.mean_auc, bloco.std_auc)
        blocos.append(bloco)
    return blocos


# Saídas

def history_frame(rows: Sequence[HistoryRow]) -> pd.DataFrame:
    return pd.DataFrame([r.as_dict() for r in rows], columns=HISTORY_COLUMNS)


def write_history(rows: Sequence[HistoryRow], path: str, header: Optional[str] = None) -> None:
    """Histórico por época em CSV (linha de cabeçalho `#` opcional)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        if header:
            f.write(header + "\n")
        history_frame(rows).to_csv(f, index=False, float_format="%.10g")


def report_text(blocks: Sequence[ExperimentBlock], header: Optional[str] = None) -> str:
    """Relatório em texto: uma linha por fold e uma linha de média por bloco."""
    linhas = [header] if header else []
    for bloco in blocks:
        linhas.append(f"[{bloco.variant}] n_skills: {bloco.n_skills}")
        for f in bloco.folds:
            linhas.append(f"fold {f.fold}: auc {f.test_auc:.4f} baseline {f.baseline_auc:.4f}")
        linhas.append(f"mean: auc {bloco.mean_auc:.4f} std {bloco.std_auc:.4f}")
    return "\n".join(linhas) + "\n"


def report_frame(blocks: Sequence[ExperimentBlock]) -> pd.DataFrame:
    linhas = []
    for bloco in blocks:
        for f in bloco.folds:
            linhas.append({"variant": bloco.variant, "n_skills": bloco.n_skills, "fold": str(f.fold),
                           "auc": f.test_auc, "baseline_auc": f.baseline_auc})
        linhas.append({"variant": bloco.variant, "n_skills": bloco.n_skills, "fold": "mean",
                       "auc": bloco.mean_auc, "baseline_auc": float(np.nanmean([f.baseline_auc for f in bloco.folds]))})
    return pd.DataFrame(linhas, columns=["variant", "n_skills", "fold", "auc", "baseline_auc"])
