"""Full model: both encoders, the integration module and an answer head,
built into one named parameter store."""
from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .davl import DavlParams, RepresentationBundle, RiVariant, create_davl_params, integrate
from .errors import DataError
from .heads import (
    MultiChoiceHead,
    OpenEndedHead,
    QuestionEncoderParams,
    create_multichoice_head,
    create_open_ended_head,
    create_question_params,
    cross_entropy,
    encode_question,
    hinge_loss,
    predict_multichoice,
    predict_open_ended,
)
from .linguistic import LinguisticEncoderParams, create_linguistic_params, encode_all
from .optim import ParamStore
from .tensor import Tensor
from .visual import VisualEncoderParams, create_visual_params, encode_clip


class Model:
    """Owns the parameter store and runs the end-to-end forward pass."""

    def __init__(self, config: ModelConfig, store: ParamStore | None = None):
        config.validate()
        self.config = config
        self.store = store if store is not None else ParamStore()
        dtype = config.dtype
        rng = np.random.default_rng(config.seed)

        self.visual: VisualEncoderParams = create_visual_params(
            self.store, rng, config.d, config.d_a, config.d_o, config.d_c,
            config.N_n, config.gcn_layers, dtype,
        )
        self.linguistic: LinguisticEncoderParams = create_linguistic_params(
            self.store, rng, config.d, config.d_t, config.N_r, config.gcn_layers, dtype,
        )
        self.question: QuestionEncoderParams = create_question_params(
            self.store, rng, config.d, config.d_t, dtype,
        )
        self.davl: DavlParams = create_davl_params(
            self.store, rng, config.d, config.N_h, config.N_n,
            RiVariant(config.ri_variant), dtype,
            normalize=config.davl_gcn_normalize,
            attention_gcn=config.davl_attention_gcn,
        )
        self.oe_head: OpenEndedHead | None = None
        self.mc_head: MultiChoiceHead | None = None
        if config.question_setting == "OE":
            self.oe_head = create_open_ended_head(
                self.store, rng, config.d, config.d_h, config.answer_set_size, dtype,
            )
        else:
            self.mc_head = create_multichoice_head(
                self.store, rng, config.d, config.d_t, dtype,
            )

    def fuse(self, sample) -> tuple[Tensor, Tensor]:
        """Run both encoders and the integration module.
        Returns (x_hat, q_hat), each of extent d."""
        x_vg, x_vl = encode_clip(self.visual, sample.clip)
        x_lg, x_ll = encode_all(self.linguistic, sample.sentences)
        q, q_hat = encode_question(self.question, sample.question)
        bundle = RepresentationBundle(x_vg, x_vl, x_lg, x_ll)
        return integrate(self.davl, bundle, q), q_hat

    def forward(self, sample) -> tuple[Tensor, Tensor]:
        """(loss, scores): scores are answer-set logits (OE) or candidate
        scores (MC)."""
        x_hat, q_hat = self.fuse(sample)
        if self.oe_head is not None:
            if sample.label is None:
                raise DataError("open-ended sample is missing its label")
            logits = predict_open_ended(self.oe_head, x_hat, q_hat)
            return cross_entropy(logits, sample.label), logits
        if sample.candidates is None or sample.correct is None:
            raise DataError("multiple-choice sample is missing candidates")
        scores = predict_multichoice(self.mc_head, x_hat, q_hat, sample.candidates)
        return hinge_loss(scores, sample.correct), scores

    def predict(self, sample) -> int:
        _, scores = self.forward(sample)
        return int(np.argmax(scores.data))

    def target_of(self, sample) -> int:
        return sample.label if self.oe_head is not None else sample.correct

    def param_count(self) -> dict:
        groups = self.store.count_by_group()
        return {"total": self.store.count(), "by_module": groups}
