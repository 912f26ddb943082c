"""Unidirectional stacked-LSTM encoder-decoder with selectable attention.

Two variants share everything except the state that scores the encoder:

  non_recurrent  the decoder runs over target embeddings alone and its
                 top hidden state queries the encoder directly
  input_feeding  the previous attentional output is projected together
                 with the embedding and fed through the decoder stack,
                 so the query state knows what was attended before

Scoring is the plain dot product; the attentional output is
tanh(Wc [context; query]) and the word distribution softmax(Wo h~).
Source sentences are encoded left to right with per-position masking:
states freeze at padding so the final state always belongs to the last
real token, and attention gives padded positions exactly zero weight.
"""

from dataclasses import asdict, dataclass

import numpy as np

from attnalign import data as dt
from attnalign import tensor as tz
from attnalign.checkpoint import load_checkpoint, save_checkpoint
from attnalign.errors import (
    ConfigError,
    ContractError,
    TrainingDivergedError,
)

VARIANTS = ("non_recurrent", "input_feeding")

# training-scale presets: desk finishes in minutes on a CPU, full is the
# large configuration the architecture is usually run at
PRESETS = {
    "desk": {
        "dim": 64, "layers": 2, "dropout": 0.0, "batch_size": 16,
        "epochs": 30, "learning_rate": 6.0, "clip_norm": 0.5,
        "decay": 0.9, "decay_from": 16, "decay_floor": 0.5,
        "vocab_size": 30000, "max_len": 100,
    },
    "full": {
        "dim": 1000, "layers": 4, "dropout": 0.3, "batch_size": 80,
        "epochs": 20, "learning_rate": 1.0, "clip_norm": 5.0,
        "decay": 1.0, "decay_from": 0, "decay_floor": 0.0,
        "vocab_size": 30000, "max_len": 100,
    },
}


@dataclass
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    dim: int = 64
    layers: int = 2
    attention: str = "input_feeding"
    dropout: float = 0.0
    seed: int = 0

    def validate(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(
                f"dropout must be in [0, 1), got {self.dropout}")
        if self.attention not in VARIANTS:
            raise ConfigError(
                f"attention must be one of {VARIANTS}, got "
                f"{self.attention!r}")
        if self.src_vocab_size < len(dt.RESERVED_TOKENS) or \
                self.tgt_vocab_size < len(dt.RESERVED_TOKENS):
            raise ConfigError("vocabulary sizes below reserved count")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


@dataclass
class EncoderStates:
    states: tz.Tensor        # (B, S, D) top-layer states
    finals: list             # per layer (hidden, cell) at the last token
    mask: np.ndarray         # (B, S) bool


@dataclass
class DecoderState:
    layers: list             # per layer (hidden, cell)
    h_tilde: tz.Tensor       # previous attentional output (input feeding)


@dataclass
class ForcedStep:
    attention: np.ndarray    # (S,) weights over source positions
    word_loss: float
    distribution: np.ndarray  # (V,) next-word probabilities
    unk_target: bool


def attend(query, states, mask):
    """Dot-product attention of a query against encoder states.

    query: (B, D) tensor, states: (B, N, D) tensor, mask: (B, N) bool.
    Returns (weights, context): weights are a masked softmax over the
    source positions, context their weighted state sum.
    """
    scores = tz.attention_scores(states, query)
    weights = tz.masked_softmax(scores, mask)
    context = tz.attention_context(weights, states)
    return weights, context


def attentional_output(context, hidden, w_c):
    """tanh(Wc [context; hidden]) — the attentional hidden state."""
    return tz.tanh(tz.matmul(tz.concat_cols(context, hidden), w_c))


class AttentionModel:
    """Parameter container plus the forward passes over id arrays."""

    def __init__(self, config):
        config.validate()
        self.config = config
        self.params = {}
        rng = np.random.default_rng(config.seed)
        d = config.dim

        def param(name, shape):
            self.params[name] = tz.Parameter(name,
                                             tz.uniform_init(shape, rng))

        param("src_embed", (config.src_vocab_size, d))
        param("tgt_embed", (config.tgt_vocab_size, d))
        # input feeding projects [h~; y] with a width-preserving square
        # matrix, so its first decoder layer reads a 2d-wide input
        dec_in = 2 * d if config.attention == "input_feeding" else d
        for side in ("enc", "dec"):
            for layer in range(config.layers):
                width = dec_in if side == "dec" and layer == 0 else d
                param(f"{side}.l{layer}.wx", (width, 4 * d))
                param(f"{side}.l{layer}.wh", (d, 4 * d))
                param(f"{side}.l{layer}.b", (4 * d,))
        if config.attention == "input_feeding":
            param("feed.w", (2 * d, 2 * d))
        param("out.wc", (2 * d, d))
        param("out.wo", (d, config.tgt_vocab_size))

    def parameters(self):
        return list(self.params.values())

    def _zeros(self, batch):
        return tz.Tensor(np.zeros((batch, self.config.dim)))

    def _run_stack(self, side, x, state_pairs, training, rng):
        """One step through the stacked LSTM; returns (top, new pairs)."""
        cfg = self.config
        new_pairs = []
        for layer in range(cfg.layers):
            if layer > 0:
                x = tz.dropout(x, cfg.dropout, rng, training)
            h, c = state_pairs[layer]
            h, c = tz.lstm_cell(x, h, c,
                                self.params[f"{side}.l{layer}.wx"],
                                self.params[f"{side}.l{layer}.wh"],
                                self.params[f"{side}.l{layer}.b"])
            new_pairs.append((h, c))
            x = h
        return x, new_pairs

    def encode(self, src_ids, src_mask, training=False, rng=None):
        """Left-to-right pass; padded positions freeze the running state."""
        src_ids = np.asarray(src_ids, dtype=np.int64)
        if src_ids.ndim != 2:
            raise ContractError("src_ids must be (batch, length)")
        if src_ids.size and src_ids.max() >= self.config.src_vocab_size:
            raise ContractError("source id out of vocabulary range")
        batch, length = src_ids.shape
        cfg = self.config
        inputs = [tz.embedding(self.params["src_embed"], src_ids[:, t])
                  for t in range(length)]
        finals = []
        for layer in range(cfg.layers):
            h = self._zeros(batch)
            c = self._zeros(batch)
            outputs = []
            for t in range(length):
                x = inputs[t]
                if layer > 0:
                    x = tz.dropout(x, cfg.dropout, rng, training)
                h_new, c_new = tz.lstm_cell(
                    x, h, c,
                    self.params[f"enc.l{layer}.wx"],
                    self.params[f"enc.l{layer}.wh"],
                    self.params[f"enc.l{layer}.b"])
                keep = src_mask[:, t : t + 1].astype(np.float64)
                if keep.all():
                    h, c = h_new, c_new
                else:
                    drop = 1.0 - keep
                    h = tz.add(tz.mul(h_new, keep), tz.mul(h, drop))
                    c = tz.add(tz.mul(c_new, keep), tz.mul(c, drop))
                outputs.append(h)
            inputs = outputs
            finals.append((h, c))
        return EncoderStates(states=tz.stack_steps(inputs), finals=finals,
                             mask=np.asarray(src_mask, dtype=bool))

    def init_decoder(self, encoded):
        """Decoder states start from the encoder's final states."""
        batch = encoded.mask.shape[0]
        return DecoderState(layers=list(encoded.finals),
                            h_tilde=self._zeros(batch))

    def input_feeding_state(self, h_tilde_prev, emb_prev, state,
                            training=False, rng=None):
        """Project [h~_{t-1}; y_{t-1}] and run the decoder stack.

        Only meaningful for the input_feeding variant; the result is
        the comparison state that scores the encoder.
        """
        if self.config.attention != "input_feeding":
            raise ContractError(
                "input_feeding_state called on a non_recurrent model")
        x = tz.matmul(tz.concat_cols(h_tilde_prev, emb_prev),
                      self.params["feed.w"])
        return self._run_stack("dec", x, state.layers, training, rng)

    def decode_step(self, state, y_prev_ids, encoded, training=False,
                    rng=None):
        """One decoder step from the previous target ids.

        Returns (weights, logits, new DecoderState); weights is the
        attention row tensor, logits the (B, V) output scores.
        """
        cfg = self.config
        emb = tz.embedding(self.params["tgt_embed"], y_prev_ids)
        if cfg.attention == "input_feeding":
            query, new_layers = self.input_feeding_state(
                state.h_tilde, emb, state, training, rng)
        else:
            query, new_layers = self._run_stack("dec", emb, state.layers,
                                                training, rng)
        weights, context = attend(query, encoded.states, encoded.mask)
        h_tilde = attentional_output(context, query, self.params["out.wc"])
        h_tilde = tz.dropout(h_tilde, cfg.dropout, rng, training)
        logits = tz.matmul(h_tilde, self.params["out.wo"])
        return weights, logits, DecoderState(layers=new_layers,
                                             h_tilde=h_tilde)

    def predict(self, logits):
        """Full softmax distribution over the target vocabulary."""
        ones = np.ones(logits.data.shape, dtype=bool)
        return tz.masked_softmax(logits, ones)

    def forced_loss(self, batch, training=False, rng=None):
        """Teacher-forced mean per-token loss over a batch.

        Returns (mean loss tensor, token count).  Padded positions are
        masked out of the sum; EOS predictions count as tokens.
        """
        encoded = self.encode(batch.src, batch.src_mask, training, rng)
        state = self.init_decoder(encoded)
        batch_size, t_len = batch.tgt.shape
        total = None
        for t in range(t_len):
            if t == 0:
                y_prev = np.full(batch_size, dt.BOS, dtype=np.int64)
            else:
                y_prev = batch.tgt[:, t - 1]
            _, logits, state = self.decode_step(state, y_prev, encoded,
                                                training, rng)
            losses = tz.softmax_nll(logits, batch.tgt[:, t])
            masked = tz.mul(losses, batch.tgt_mask[:, t].astype(np.float64))
            total = masked if total is None else tz.add(total, masked)
        count = int(batch.tgt_mask.sum())
        return tz.mul(tz.sum_all(total), 1.0 / count), count

    def force_decode_ids(self, src_ids, tgt_ids):
        """Teacher-forced single sentence; evaluation mode, no tape.

        Returns one (attention row, loss, distribution) triple per
        reference token.
        """
        src_ids = np.asarray(src_ids, dtype=np.int64)
        tgt_ids = np.asarray(tgt_ids, dtype=np.int64)
        if tgt_ids.size == 0:
            raise ContractError("reference target is empty")
        mask = np.ones((1, src_ids.size), dtype=bool)
        encoded = self.encode(src_ids[None, :], mask)
        state = self.init_decoder(encoded)
        steps = []
        for t in range(tgt_ids.size):
            y_prev = np.array([dt.BOS if t == 0 else tgt_ids[t - 1]])
            weights, logits, state = self.decode_step(state, y_prev,
                                                      encoded)
            dist = self.predict(logits)
            prob = float(dist.data[0, tgt_ids[t]])
            steps.append(ForcedStep(
                attention=weights.data[0].copy(),
                word_loss=float(-np.log(max(prob, 1e-300))),
                distribution=dist.data[0].copy(),
                unk_target=bool(tgt_ids[t] == dt.UNK)))
        return steps

    def translate_ids(self, src_ids, max_len=100):
        """Greedy argmax decoding until EOS or max_len.

        Returns (generated ids, attention matrix rows, hit_max_len).
        """
        src_ids = np.asarray(src_ids, dtype=np.int64)
        mask = np.ones((1, src_ids.size), dtype=bool)
        encoded = self.encode(src_ids[None, :], mask)
        state = self.init_decoder(encoded)
        out_ids = []
        rows = []
        y_prev = np.array([dt.BOS], dtype=np.int64)
        for _ in range(max_len):
            weights, logits, state = self.decode_step(state, y_prev,
                                                      encoded)
            next_id = int(np.argmax(logits.data[0]))
            if next_id == dt.EOS:
                return out_ids, np.array(rows).reshape(len(rows), -1), False
            out_ids.append(next_id)
            rows.append(weights.data[0].copy())
            y_prev = np.array([next_id], dtype=np.int64)
        return out_ids, np.array(rows).reshape(len(rows), -1), True


def force_decode(model, source_tokens, target_tokens, src_vocab, tgt_vocab):
    """Token-level forced decode; OOV reference tokens map to UNK."""
    src_ids = src_vocab.encode(source_tokens)
    tgt_ids = tgt_vocab.encode(target_tokens)
    unk_flags = [tok not in tgt_vocab for tok in target_tokens]
    steps = model.force_decode_ids(src_ids, tgt_ids)
    for step, flag in zip(steps, unk_flags):
        step.unk_target = bool(flag)
    return steps


def translate_greedy(model, source_tokens, src_vocab, tgt_vocab,
                     max_len=100):
    """Greedy translation; returns (tokens, attention, hit_max_len)."""
    ids, rows, hit = model.translate_ids(src_vocab.encode(source_tokens),
                                         max_len)
    return tgt_vocab.decode(ids), rows, hit


def train_model(model, pairs, src_vocab, tgt_vocab, *, epochs,
                learning_rate=1.0, clip_norm=5.0, batch_size=16, seed=0,
                decay=1.0, decay_from=0, decay_floor=0.0,
                checkpoint_dir=None, log_fn=None):
    """SGD training with gradient clipping; returns per-epoch losses.

    The learning rate is multiplied by decay after every epoch index
    >= decay_from (decay 1.0 keeps it constant) but never drops below
    decay_floor.  Deterministic for a fixed seed: batch order
    reshuffles per epoch from seed + epoch and dropout draws from one
    seeded generator.  A non-finite batch loss aborts with the
    epoch/batch named.
    """
    rng = np.random.default_rng(seed)
    losses = []
    lr = learning_rate
    for epoch in range(epochs):
        if epoch > decay_from:
            lr = max(lr * decay, decay_floor)
        batches = dt.make_batches(pairs, src_vocab, tgt_vocab, batch_size,
                                  seed=seed + epoch)
        epoch_total = 0.0
        epoch_tokens = 0
        for index, batch in enumerate(batches):
            with tz.Tape() as tape:
                loss, count = model.forced_loss(batch, training=True,
                                                rng=rng)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss in epoch {epoch} batch {index}",
                        epoch=epoch, batch=index)
                tape.backward(loss)
            tz.sgd_step(model.parameters(), lr, clip_norm)
            epoch_total += value * count
            epoch_tokens += count
        mean = epoch_total / max(epoch_tokens, 1)
        losses.append(mean)
        if log_fn is not None:
            log_fn(epoch, mean)
        if checkpoint_dir is not None:
            save_model(checkpoint_dir / f"epoch_{epoch + 1:03d}.ckpt",
                       model, src_vocab, tgt_vocab)
    return losses


def save_model(path, model, src_vocab, tgt_vocab):
    config = {
        "model": model.config.to_dict(),
        "src_vocab": src_vocab.tokens[len(dt.RESERVED_TOKENS):],
        "tgt_vocab": tgt_vocab.tokens[len(dt.RESERVED_TOKENS):],
    }
    save_checkpoint(path, config, model.parameters())


def load_model(path):
    """Rebuild a model plus its vocabularies from a checkpoint."""
    config, values = load_checkpoint(path)
    model_cfg = ModelConfig.from_dict(config["model"])
    src_vocab = dt.Vocabulary(config["src_vocab"])
    tgt_vocab = dt.Vocabulary(config["tgt_vocab"])
    if len(src_vocab) != model_cfg.src_vocab_size or \
            len(tgt_vocab) != model_cfg.tgt_vocab_size:
        raise ConfigError(
            "checkpoint vocabulary does not match its model config")
    model = AttentionModel(model_cfg)
    if set(values) != set(model.params):
        raise ConfigError("checkpoint parameter names do not match config")
    for name, param in model.params.items():
        if values[name].shape != param.data.shape:
            raise ConfigError(
                f"checkpoint parameter {name} has shape "
                f"{values[name].shape}, expected {param.data.shape}")
        param.data[...] = values[name]
    return model, src_vocab, tgt_vocab
