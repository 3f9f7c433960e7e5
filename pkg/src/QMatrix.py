from typing import List, Optional, Sequence

import numpy as np

from excecoes import DataError


class QMatrix:
    """
    Q-matrix binária N×M: linha = habilidade (skill), coluna = questão.
    A entrada (c, q) = 1 indica que dominar a habilidade c é necessário
    para responder corretamente à questão q.
    """

    def __init__(self, entries, question_ids: Optional[Sequence[str]] = None,
                 skill_labels: Optional[Sequence[str]] = None):
        """
        Construtor da q-matrix.

        Args:
            entries: Matriz N×M com valores 0/1
            question_ids: Identificadores das M questões (padrão "1".."M")
            skill_labels: Rótulos opcionais das N habilidades

        Raises:
            DataError: Se a matriz não for 2D, estiver vazia ou tiver valores não binários
        """
        matriz = np.asarray(entries)
        if matriz.ndim != 2 or matriz.shape[0] == 0 or matriz.shape[1] == 0:
            raise DataError(f"Q-matrix deve ser 2D e não vazia, recebido forma {matriz.shape}")
        if not np.all((matriz == 0) | (matriz == 1)):
            raise DataError("Q-matrix deve conter apenas 0 e 1")

        self._matrix = matriz.astype(np.int8)
        n, m = self._matrix.shape
        self.question_ids: List[str] = ([str(q) for q in question_ids] if question_ids is not None
                                        else [str(j + 1) for j in range(m)])
        if len(self.question_ids) != m:
            raise DataError(f"{len(self.question_ids)} ids de questão para {m} colunas")
        self.skill_labels: List[str] = ([str(s) for s in skill_labels] if skill_labels is not None
                                        else [str(i) for i in range(n)])
        if len(self.skill_labels) != n:
            raise DataError(f"{len(self.skill_labels)} rótulos de habilidade para {n} linhas")

    def _validate_skill(self, c: int) -> None:
        """
        Raises:
            IndexError: Se o índice da habilidade for inválido
        """
        if not (0 <= c < self.getSkillCount()):
            raise IndexError(f"Índice de habilidade inválido: {c}. Deve estar entre 0 e {self.getSkillCount() - 1}")

    def _validate_question(self, q: int) -> None:
        """
        Raises:
            IndexError: Se o índice da questão for inválido
        """
        if not (0 <= q < self.getQuestionCount()):
            raise IndexError(f"Índice de questão inválido: {q}. Deve estar entre 0 e {self.getQuestionCount() - 1}")

    @property
    def entries(self) -> np.ndarray:
        return self._matrix

    @property
    def shape(self):
        return self._matrix.shape

    def getSkillCount(self) -> int:
        """Retorna o número de habilidades N."""
        return self._matrix.shape[0]

    def getQuestionCount(self) -> int:
        """Retorna o número de questões M."""
        return self._matrix.shape[1]

    def hasSkill(self, c: int, q: int) -> bool:
        """Verifica se a questão q exige a habilidade c."""
        self._validate_skill(c)
        self._validate_question(q)
        return bool(self._matrix[c, q])

    def addSkill(self, c: int, q: int) -> None:
        """Marca a habilidade c como necessária para q (idempotente)."""
        self._validate_skill(c)
        self._validate_question(q)
        self._matrix[c, q] = 1

    def removeSkill(self, c: int, q: int) -> None:
        self._validate_skill(c)
        self._validate_question(q)
        self._matrix[c, q] = 0

    def getQuestionSkills(self, q: int) -> List[int]:
        """Habilidades exigidas pela questão q."""
        self._validate_question(q)
        return [int(c) for c in np.flatnonzero(self._matrix[:, q])]

    def getSkillQuestions(self, c: int) -> List[int]:
        """Questões que exigem a habilidade c."""
        self._validate_skill(c)
        return [int(q) for q in np.flatnonzero(self._matrix[c, :])]

    def getDensity(self) -> float:
        """Fração de entradas iguais a 1."""
        return float(self._matrix.mean())

    def emptyColumns(self) -> List[int]:
        """Questões sem nenhuma habilidade associada."""
        return [int(q) for q in np.flatnonzero(self._matrix.sum(axis=0) == 0)]

    def copy(self) -> "QMatrix":
        return QMatrix(self._matrix.copy(), self.question_ids, self.skill_labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QMatrix):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self._matrix, other._matrix)
                and self.question_ids == other.question_ids)

    def __str__(self) -> str:
        """
        Representação string da q-matrix.

        Returns:
            String com uma linha por habilidade e uma coluna por questão
        """
        largura = max(2, max(len(q) for q in self.question_ids))
        rotulo = max(3, max(len(s) for s in self.skill_labels))
        result = "Q-matrix:\n"
        result += " " * (rotulo + 2) + " ".join(f"{q:>{largura}}" for q in self.question_ids) + "\n"
        for i in range(self.getSkillCount()):
            result += f"{self.skill_labels[i]:>{rotulo}}: "
            result += " ".join(f"{int(v):>{largura}}" for v in self._matrix[i]) + "\n"
        return result

    def exportar_csv(self, path: str, header: Optional[str] = None) -> None:
        """Grava a q-matrix em CSV (`skill,<ids>` seguido de uma linha por habilidade)."""
        from dados import write_qmatrix
        write_qmatrix(self, path, header)
