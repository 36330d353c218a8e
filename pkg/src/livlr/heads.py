"""Question encoder and the two answer heads.

Open-ended answering is a classifier over a fixed answer set; its loss is
cross entropy. Multiple-choice answering scores each candidate with a
linear regressor over [fused; question; candidate] and trains with a
summed pairwise hinge: every wrong candidate must trail the right one by
a margin of 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .optim import ParamStore, make_param
from .rnn import BiLstmParams, bilstm_embed, create_bilstm_params
from .tensor import (
    Tensor,
    add,
    concat,
    constant,
    exp,
    linear,
    log,
    mul,
    relu,
    reshape,
    sum_all,
    take,
)


@dataclass
class QuestionEncoderParams:
    w_tok: Tensor
    b_tok: Tensor
    lstm: BiLstmParams

    @property
    def dtype(self):
        return self.w_tok.data.dtype


@dataclass
class OpenEndedHead:
    w1: Tensor  # (2d, d_h)
    b1: Tensor
    w2: Tensor  # (d_h, answer_set_size)
    b2: Tensor


@dataclass
class MultiChoiceHead:
    cand_encoder: QuestionEncoderParams  # same architecture, separate weights
    w_score: Tensor  # (3d, 1)
    b_score: Tensor


def create_question_params(
    store: ParamStore, rng, d: int, d_t: int, dtype, prefix: str = "question"
) -> QuestionEncoderParams:
    return QuestionEncoderParams(
        w_tok=make_param(store, f"{prefix}.token_proj.w", rng, (d_t, d), dtype),
        b_tok=make_param(store, f"{prefix}.token_proj.b", rng, (d,), dtype, init="zeros"),
        lstm=create_bilstm_params(store, f"{prefix}.lstm", rng, d, d, dtype),
    )


def create_open_ended_head(
    store: ParamStore, rng, d: int, d_h: int, n_answers: int, dtype
) -> OpenEndedHead:
    return OpenEndedHead(
        w1=make_param(store, "head.fc1.w", rng, (2 * d, d_h), dtype),
        b1=make_param(store, "head.fc1.b", rng, (d_h,), dtype, init="zeros"),
        w2=make_param(store, "head.fc2.w", rng, (d_h, n_answers), dtype),
        b2=make_param(store, "head.fc2.b", rng, (n_answers,), dtype, init="zeros"),
    )


def create_multichoice_head(
    store: ParamStore, rng, d: int, d_t: int, dtype
) -> MultiChoiceHead:
    return MultiChoiceHead(
        cand_encoder=create_question_params(store, rng, d, d_t, dtype, prefix="head.cand"),
        w_score=make_param(store, "head.score.w", rng, (3 * d, 1), dtype),
        b_score=make_param(store, "head.score.b", rng, (1,), dtype, init="zeros"),
    )


def encode_question(
    params: QuestionEncoderParams, tokens: np.ndarray
) -> tuple[Tensor, Tensor]:
    """(Q, q_hat): token-level rows (N_t, d) after a ReLU projection, and
    the BiLSTM summary (d,) over those rows."""
    proj = relu(linear(constant(tokens, params.dtype), params.w_tok, params.b_tok))
    return proj, bilstm_embed(params.lstm, proj)


def predict_open_ended(head: OpenEndedHead, x_hat: Tensor, q_hat: Tensor) -> Tensor:
    """Answer-set logits from the fused and question vectors."""
    joint = concat([x_hat, q_hat], axis=0)
    hidden = relu(linear(joint, head.w1, head.b1))
    return linear(hidden, head.w2, head.b2)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], stabilized by max subtraction."""
    n = logits.data.shape[0]
    if not (0 <= label < n):
        raise ContractError(f"label {label} out of range for {n} answers")
    m = float(logits.data.max())
    shifted = add(logits, -m)
    lse = log(sum_all(exp(shifted)))  # log-sum-exp of the shifted logits
    picked = reshape(take(shifted, [label]), ())
    return add(lse, mul(picked, -1.0))


def predict_multichoice(
    head: MultiChoiceHead, x_hat: Tensor, q_hat: Tensor, candidates: np.ndarray
) -> Tensor:
    """Scores (N_k,): one linear regression per candidate embedding."""
    if candidates.ndim != 3:
        raise ContractError(
            f"candidates must be (N_k, n_tok, d_t), got {candidates.shape}"
        )
    scores = []
    for k in range(candidates.shape[0]):
        _, e_k = encode_question(head.cand_encoder, candidates[k])
        joint = concat([x_hat, q_hat, e_k], axis=0)
        scores.append(linear(joint, head.w_score, head.b_score))
    return concat(scores, axis=0)


def hinge_loss(scores: Tensor, correct: int) -> Tensor:
    """Sum over wrong candidates of max(0, 1 - (s_correct - s_wrong))."""
    n = scores.data.shape[0]
    if not (0 <= correct < n):
        raise ContractError(f"correct index {correct} out of range for {n} candidates")
    if n < 2:
        raise ContractError("need at least two candidates")
    pos = take(scores, [correct])  # (1,)
    neg_idx = [k for k in range(n) if k != correct]
    neg = take(scores, neg_idx)
    margins = relu(add(add(neg, mul(pos, -1.0)), 1.0))
    return reshape(sum_all(margins), ())
