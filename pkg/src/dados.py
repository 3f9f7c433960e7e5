import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd
import requests

from excecoes import ConfigError, DataError, FormatError
from QMatrix import QMatrix

logger = logging.getLogger(__name__)

# Diretório para salvar os dados coletados (path absoluto relativo a este arquivo)
# Usa o diretório pai do pacote `src` para localizar `dados_coletados`, tornando o carregamento
# independente do diretório de trabalho atual.
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.normpath(os.path.join(BASE_DIR, '..', 'dados_coletados'))
METADADOS_FILE = 'metadados.json'

REQUIRED_COLUMNS = ("student_id", "question_id", "correct")
PADDING_QUESTION = 0


# Função para criar diretório de dados se não existir
def criar_diretorio_dados(diretorio: str = DATA_DIR) -> None:
    """Cria o diretório para armazenar os dados coletados."""
    if not os.path.exists(diretorio):
        os.makedirs(diretorio)
        logger.info("Diretório '%s' criado.", diretorio)


def salvar_json(dados: Any, arquivo: str, indent: int = 2) -> None:
    """Salva dados em um arquivo JSON."""
    criar_diretorio_dados(os.path.dirname(os.path.abspath(arquivo)))
    with open(arquivo, 'w', encoding='utf-8') as f:
        json.dump(dados, f, indent=indent, ensure_ascii=False)
    logger.debug("Dados salvos em: %s", arquivo)


def carregar_json(arquivo: str) -> Optional[Any]:
    """Carrega dados de um arquivo JSON (None se o arquivo não existir)."""
    if os.path.exists(arquivo):
        with open(arquivo, 'r', encoding='utf-8') as f:
            return json.load(f)
    return None


def _linhas_comentario(path: str) -> int:
    """Número de linhas iniciais começando com '#' (cabeçalho de proveniência)."""
    n = 0
    with open(path, 'r', encoding='utf-8') as f:
        for linha in f:
            if not linha.startswith('#'):
                break
            n += 1
    return n


def _escrever_com_cabecalho(path: str, header: Optional[str]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        if header:
            f.write(header.rstrip('\n') + '\n')


# Interações

@dataclass
class InteractionLog:
    """
    Registros de interação já ordenados por aluno (ordem de primeira aparição)
    e, dentro de cada aluno, por timestamp e ordem do arquivo.

    frame: colunas student_id, question_id, correct, question_index e,
        quando presentes, timestamp e skills (lista de ids)
    question_index: id da questão -> índice em 1..M (0 = preenchimento)
    skill_index: id da habilidade de especialista -> índice em 0..K-1
    dropped: linhas descartadas por valores nulos
    """
    frame: pd.DataFrame
    question_index: Dict[str, int]
    skill_index: Dict[str, int] = field(default_factory=dict)
    dropped: int = 0

    @property
    def n_questions(self) -> int:
        return len(self.question_index)

    @property
    def question_ids(self) -> List[str]:
        """Ids das questões na ordem dos índices 1..M."""
        return sorted(self.question_index, key=self.question_index.get)

    @property
    def has_skills(self) -> bool:
        return "skills" in self.frame.columns

    def students(self) -> List[str]:
        return list(pd.unique(self.frame["student_id"]))

    def __len__(self) -> int:
        return len(self.frame)

    def sequences(self) -> Iterator[tuple]:
        """(student_id, índices das questões, respostas) por aluno."""
        for aluno, grupo in self.frame.groupby("student_id", sort=False):
            yield (aluno,
                   grupo["question_index"].to_numpy(dtype=np.int64),
                   grupo["correct"].to_numpy(dtype=np.int64))

    def subset(self, students: Sequence[str]) -> "InteractionLog":
        """Log restrito aos alunos dados, mantendo o vocabulário completo."""
        alunos = set(students)
        frame = self.frame[self.frame["student_id"].isin(alunos)].reset_index(drop=True)
        return InteractionLog(frame, self.question_index, self.skill_index, 0)


def _separar_habilidades(valor) -> List[str]:
    if valor is None or (isinstance(valor, float) and np.isnan(valor)):
        return []
    return [s.strip() for s in str(valor).split(';') if s.strip()]


def ingest(path: str, format: str = "csv") -> InteractionLog:
    """
    Lê um CSV de interações com cabeçalho
    `student_id,question_id,correct[,timestamp][,skills]`.

    Linhas com nulos nas colunas obrigatórias são descartadas (contagem
    registrada). Índices de questão são densos a partir de 1, na ordem de
    primeira aparição no arquivo.

    Args:
        path: caminho do arquivo
        format: apenas "csv"

    Returns:
        InteractionLog

    Raises:
        FormatError: Coluna obrigatória ausente ou `correct` fora de {0, 1}
        DataError: Arquivo inexistente ou nenhuma interação válida
    """
    if format != "csv":
        raise FormatError(f"Formato de entrada não suportado: {format}")
    if not os.path.exists(path):
        raise DataError(f"Arquivo de interações não encontrado: {path}")

    try:
        frame = pd.read_csv(path, skiprows=_linhas_comentario(path),
                            dtype={"student_id": str, "question_id": str, "skills": str})
    except pd.errors.EmptyDataError:
        raise DataError(f"Arquivo de interações vazio: {path}") from None
    except pd.errors.ParserError as e:
        raise FormatError(f"CSV inválido em {path}: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    faltando = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if faltando:
        raise FormatError(f"Colunas obrigatórias ausentes em {path}: {', '.join(faltando)}")

    antes = len(frame)
    frame = frame.dropna(subset=list(REQUIRED_COLUMNS)).reset_index(drop=True)
    descartadas = antes - len(frame)
    if descartadas:
        logger.info("%d linhas com valores nulos descartadas de %s", descartadas, path)
    if frame.empty:
        raise DataError(f"Nenhuma interação válida em {path}")

    correto = pd.to_numeric(frame["correct"], errors="coerce")
    if correto.isna().any() or not correto.isin([0, 1]).all():
        invalidos = frame.loc[~correto.isin([0, 1]), "correct"].unique()[:5]
        raise FormatError(f"`correct` deve ser 0 ou 1; valores inválidos: {list(invalidos)}")
    frame["correct"] = correto.astype(np.int64)
    frame["student_id"] = frame["student_id"].str.strip()
    frame["question_id"] = frame["question_id"].str.strip()

    question_index = {q: i + 1 for i, q in enumerate(pd.unique(frame["question_id"]))}
    frame["question_index"] = frame["question_id"].map(question_index).astype(np.int64)

    skill_index: Dict[str, int] = {}
    if "skills" in frame.columns:
        frame["skills"] = pd.Series([_separar_habilidades(v) for v in frame["skills"]],
                                    index=frame.index, dtype=object)
        for lista in frame["skills"]:
            for s in lista:
                skill_index.setdefault(s, len(skill_index))

    # Ordem estável: aluno (primeira aparição), timestamp, ordem do arquivo
    ordem_alunos = {a: i for i, a in enumerate(pd.unique(frame["student_id"]))}
    frame["_aluno"] = frame["student_id"].map(ordem_alunos)
    frame["_linha"] = np.arange(len(frame))
    chaves = ["_aluno", "timestamp", "_linha"] if "timestamp" in frame.columns else ["_aluno", "_linha"]
    frame = frame.sort_values(chaves, kind="mergesort", na_position="last")
    frame = frame.drop(columns=["_aluno", "_linha"]).reset_index(drop=True)

    logger.info("Ingestão de %s: %d interações, %d alunos, %d questões",
                path, len(frame), len(ordem_alunos), len(question_index))
    return InteractionLog(frame, question_index, skill_index, descartadas)


def write_interactions(log: InteractionLog, path: str, header: Optional[str] = None) -> None:
    """Grava o log no formato de entrada de `ingest` (com linha de cabeçalho opcional)."""
    colunas = [c for c in ("student_id", "question_id", "correct", "timestamp", "skills")
               if c in log.frame.columns]
    saida = log.frame[colunas].copy()
    if "skills" in saida.columns:
        saida["skills"] = [";".join(s) for s in saida["skills"]]
    _escrever_com_cabecalho(path, header)
    with open(path, 'a', encoding='utf-8', newline='') as f:
        saida.to_csv(f, index=False)


# Sequências e partições

@dataclass
class StudentSequence:
    """
    Fatia de até slice_length interações de um aluno, já preenchida.
    mask marca as posições reais; o preenchimento usa (q0, resposta 0).
    """
    student_id: str
    questions: np.ndarray
    responses: np.ndarray
    mask: np.ndarray

    @property
    def length(self) -> int:
        """Número de interações reais."""
        return int(self.mask.sum())


def slice_sequences(log: InteractionLog, slice_length: int = 200) -> List[StudentSequence]:
    """
    Corta a sequência de cada aluno em fatias consecutivas de slice_length;
    a última fatia parcial é completada à direita com a questão de
    preenchimento e mascarada.

    Raises:
        ConfigError: Se slice_length < 2
    """
    if slice_length < 2:
        raise ConfigError(f"slice_length deve ser >= 2, recebido {slice_length}")
    fatias: List[StudentSequence] = []
    for aluno, questoes, respostas in log.sequences():
        for inicio in range(0, len(questoes), slice_length):
            q = questoes[inicio:inicio + slice_length]
            r = respostas[inicio:inicio + slice_length]
            falta = slice_length - len(q)
            mascara = np.concatenate([np.ones(len(q), dtype=bool), np.zeros(falta, dtype=bool)])
            fatias.append(StudentSequence(
                student_id=aluno,
                questions=np.concatenate([q, np.full(falta, PADDING_QUESTION, dtype=np.int64)]),
                responses=np.concatenate([r, np.zeros(falta, dtype=np.int64)]),
                mask=mascara,
            ))
    logger.debug("%d fatias de comprimento %d", len(fatias), slice_length)
    return fatias


@dataclass
class FoldSplit:
    """Papéis dos alunos num experimento: 3 folds de treino, 1 de validação, 1 de teste."""
    experiment: int
    train: List[str]
    validation: List[str]
    test: List[str]
    folds: List[List[str]] = field(default_factory=list)

    def overlaps(self) -> bool:
        a, b, c = set(self.train), set(self.validation), set(self.test)
        return bool(a & b or a & c or b & c)


def kfold(students, k: int = 5, seed: int = 0) -> List[FoldSplit]:
    """
    Embaralha os alunos com a semente e os divide em k folds de tamanhos
    próximos. O experimento i testa no fold i e valida no fold (i+1) mod k.

    Args:
        students: InteractionLog ou lista de ids de aluno
        k: número de folds (>= 3)
        seed: semente do embaralhamento

    Raises:
        ConfigError: Se houver menos alunos que folds ou k < 3
    """
    alunos = students.students() if isinstance(students, InteractionLog) else list(students)
    if k < 3:
        raise ConfigError(f"k deve ser >= 3, recebido {k}")
    if len(alunos) < k:
        raise ConfigError(f"{len(alunos)} alunos não bastam para {k} folds")

    ordem = np.random.default_rng(seed).permutation(len(alunos))
    folds = [[alunos[i] for i in parte] for parte in np.array_split(ordem, k)]
    experimentos = []
    for i in range(k):
        validacao = (i + 1) % k
        treino = [a for j, fold in enumerate(folds) if j not in (i, validacao) for a in fold]
        experimentos.append(FoldSplit(i, treino, list(folds[validacao]), list(folds[i]), folds))
    return experimentos


def sequences_for(fatias: Sequence[StudentSequence], students: Sequence[str]) -> List[StudentSequence]:
    alunos = set(students)
    return [s for s in fatias if s.student_id in alunos]


# Lotes

@dataclass
class Lote:
    """Lote de fatias empilhadas, cortado no maior comprimento real."""
    questions: np.ndarray
    responses: np.ndarray
    mask: np.ndarray

    def __len__(self) -> int:
        return self.questions.shape[0]


def empilhar(fatias: Sequence[StudentSequence]) -> Lote:
    if not fatias:
        raise DataError("Lote vazio")
    comprimento = max(max(s.length for s in fatias), 1)
    return Lote(
        questions=np.stack([s.questions[:comprimento] for s in fatias]),
        responses=np.stack([s.responses[:comprimento] for s in fatias]),
        mask=np.stack([s.mask[:comprimento] for s in fatias]),
    )


def batches(fatias: Sequence[StudentSequence], batch_size: int,
            rng: Optional[np.random.Generator] = None) -> Iterator[Lote]:
    """Lotes de batch_size fatias; embaralhados quando rng é dado."""
    ordem = np.arange(len(fatias)) if rng is None else rng.permutation(len(fatias))
    for inicio in range(0, len(ordem), batch_size):
        yield empilhar([fatias[i] for i in ordem[inicio:inicio + batch_size]])


# Q-matrix

def read_qmatrix(path: str) -> QMatrix:
    """
    Lê uma q-matrix em CSV: primeira linha `skill,<ids das questões>`,
    demais linhas `<índice da habilidade>,0/1,...`.

    Raises:
        DataError: Arquivo inexistente ou vazio
        FormatError: Entrada diferente de "0"/"1" ou linha com tamanho errado
    """
    if not os.path.exists(path):
        raise DataError(f"Arquivo de q-matrix não encontrado: {path}")
    try:
        frame = pd.read_csv(path, skiprows=_linhas_comentario(path), dtype=str,
                            keep_default_na=False, index_col=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"Arquivo de q-matrix vazio: {path}") from None
    except pd.errors.ParserError as e:
        raise FormatError(f"Q-matrix inválida em {path}: {e}") from e

    if frame.shape[1] < 2 or frame.shape[0] == 0:
        raise FormatError(f"Q-matrix em {path} precisa de ao menos 1 habilidade e 1 questão")
    valores = frame.iloc[:, 1:].apply(lambda col: col.str.strip())
    invalidos = ~valores.isin(["0", "1"])
    if invalidos.to_numpy().any():
        linha, coluna = np.argwhere(invalidos.to_numpy())[0]
        raise FormatError(f"Entrada não binária na q-matrix ({path}): habilidade {linha}, "
                          f"questão {frame.columns[coluna + 1]!r} = {valores.iat[linha, coluna]!r}")

    qm = QMatrix(valores.to_numpy().astype(np.int8),
                 question_ids=[str(c).strip() for c in frame.columns[1:]],
                 skill_labels=[str(s).strip() for s in frame.iloc[:, 0]])
    vazias = qm.emptyColumns()
    if vazias:
        logger.warning("Q-matrix %s: %d questões sem nenhuma habilidade (%s)",
                       path, len(vazias), ", ".join(qm.question_ids[q] for q in vazias[:10]))
    return qm


def write_qmatrix(qmatrix: QMatrix, path: str, header: Optional[str] = None) -> None:
    """Grava a q-matrix no formato lido por `read_qmatrix`."""
    _escrever_com_cabecalho(path, header)
    with open(path, 'a', encoding='utf-8', newline='') as f:
        f.write(",".join(["skill"] + qmatrix.question_ids) + "\n")
        for rotulo, linha in zip(qmatrix.skill_labels, qmatrix.entries):
            f.write(",".join([rotulo] + [str(int(v)) for v in linha]) + "\n")


# Coleta de conjuntos de dados públicos

def fetch_dataset(url: str, nome: str, destino: str = DATA_DIR, timeout: float = 60.0) -> str:
    """
    Baixa um CSV de interações para `destino` e registra a coleta em
    metadados.json.

    Args:
        url: endereço do arquivo
        nome: nome do arquivo local
        destino: diretório de dados (padrão dados_coletados/)

    Returns:
        Caminho do arquivo salvo

    Raises:
        DataError: Falha de rede ou resposta HTTP de erro
    """
    criar_diretorio_dados(destino)
    caminho = os.path.join(destino, nome)
    logger.info("Baixando %s", url)
    try:
        r = requests.get(url, timeout=timeout)
        r.raise_for_status()
    except requests.RequestException as e:
        raise DataError(f"Falha ao baixar {url}: {e}") from e

    with open(caminho, 'wb') as f:
        f.write(r.content)

    arquivo_meta = os.path.join(destino, METADADOS_FILE)
    metadados = carregar_json(arquivo_meta) or {}
    metadados[nome] = {
        "url": url,
        "data_coleta": datetime.now().isoformat(),
        "bytes": len(r.content),
        "sha256": hashlib.sha256(r.content).hexdigest(),
    }
    salvar_json(metadados, arquivo_meta)
    logger.info("Dados salvos em: %s (%d bytes)", caminho, len(r.content))
    return caminho


def carregar_metadados(destino: str = DATA_DIR) -> Dict[str, Any]:
    """Metadados das coletas já feitas (vazio se nada foi baixado)."""
    return carregar_json(os.path.join(destino, METADADOS_FILE)) or {}


def reindex(log: InteractionLog, question_ids: Sequence[str]) -> InteractionLog:
    """
    Reescreve os índices de questão pelo vocabulário dado (ex.: o de um
    checkpoint). Interações com questões fora do vocabulário são descartadas.

    Raises:
        DataError: Se nenhuma interação restar
    """
    vocabulario = {str(q): i + 1 for i, q in enumerate(question_ids)}
    conhecidas = log.frame["question_id"].isin(vocabulario)
    descartadas = int((~conhecidas).sum())
    if descartadas:
        logger.warning("%d interações com questões fora do vocabulário descartadas", descartadas)
    frame = log.frame[conhecidas].copy().reset_index(drop=True)
    if frame.empty:
        raise DataError("Nenhuma interação com questões do vocabulário")
    frame["question_index"] = frame["question_id"].map(vocabulario).astype(np.int64)
    return InteractionLog(frame, vocabulario, log.skill_index, log.dropped + descartadas)
