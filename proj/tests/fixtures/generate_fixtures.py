#!/usr/bin/env python3
#
# Copyright 2026 The qrel Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""Builds the small test models and parity fixtures under tests/data.

Offline tool; the C++ test suites only read its outputs. Requires torch,
transformers, tokenizers and safetensors.

  python3 tests/fixtures/generate_fixtures.py \
      --bert-vocab vocab.json --gpt2-encoder encoder.json \
      --gpt2-merges vocab.bpe --out tests/data

--bert-vocab accepts either a plain WordPiece vocab.txt or the JSON list
shipped with the `bert-tokenizer` npm package (SentencePiece-style "▁"
markers, which are converted back to WordPiece "##" continuations).
"""

import argparse
import json
import os

import torch
from safetensors.torch import save_file
from tokenizers import Tokenizer
from tokenizers.implementations import BertWordPieceTokenizer
from tokenizers.models import BPE
from tokenizers import decoders, pre_tokenizers
from transformers import BertConfig, BertModel, GPT2Config, GPT2LMHeadModel

SEED = 20260419

MLM_CONFIG = dict(hidden_size=32, num_hidden_layers=12, num_attention_heads=4,
                  intermediate_size=64, max_position_embeddings=128,
                  type_vocab_size=2, layer_norm_eps=1e-12)
CLM_CONFIG = dict(n_embd=32, n_layer=2, n_head=4, n_positions=160,
                  layer_norm_epsilon=1e-5)

PARITY_PAIR = ("when was Common Sense first published?",
               "In 1987, when some students believed that The Observer began "
               "to show a conservative bias, a liberal newspaper, Common "
               "Sense was published.")

TOKENIZER_STRINGS = [
    "when was Common Sense first published?",
    "Where didn't Jack buy his milk and honey?",
    "Café Déjà vu -- naïve résumé, Ångström!",
    "  multiple   spaces\tand\nnewlines  ",
    "Prices rose 12.5% in 1987; 3,000 people (roughly) left.",
    "東京 is in Japan, 北京 is in China.",
    "emoji 😀 and symbols ©®™ → ∑",
    "He said: \"it's, they're, we've, I'm, you'll, she'd\"",
    "unbelievably-long-hyphenated_word_with_underscores",
    "Supercalifragilisticexpialidocious antidisestablishmentarianism",
]


def load_bert_vocab(path):
    if path.endswith(".txt"):
        with open(path, encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    vocab = []
    for i, tok in enumerate(raw):
        if tok.startswith("[") and tok.endswith("]"):
            vocab.append(tok)
        elif tok.startswith("▁"):
            vocab.append(tok[1:] if len(tok) > 1 else "[unused0]")
        else:
            vocab.append("##" + tok)
    seen = set()
    for i, tok in enumerate(vocab):
        if tok in seen:
            vocab[i] = "[unused_dup%d]" % i
        seen.add(vocab[i])
    return vocab


def build_bert_tokenizer(vocab_list, out_dir):
    vocab = {tok: i for i, tok in enumerate(vocab_list)}
    tok = BertWordPieceTokenizer(vocab, lowercase=True, strip_accents=None,
                                 clean_text=True, handle_chinese_chars=True)
    path = os.path.join(out_dir, "tokenizer.json")
    tok.save(path)
    return Tokenizer.from_file(path)


def build_gpt2_tokenizer(encoder_path, merges_path, out_dir):
    with open(encoder_path, encoding="utf-8") as f:
        vocab = json.load(f)
    with open(merges_path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    merges = [tuple(l.split(" ")) for l in lines[1:] if l.strip()]
    tok = Tokenizer(BPE(vocab, merges))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    tok.add_special_tokens(["<|endoftext|>"])
    path = os.path.join(out_dir, "tokenizer.json")
    tok.save(path)
    return Tokenizer.from_file(path)


def round_to_half(model):
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(p.half().float())


def save_half(model, path, metadata, drop=()):
    state = {k: v.detach().half().contiguous()
             for k, v in model.state_dict().items()
             if not any(k.startswith(d) for d in drop)}
    save_file(state, path, metadata=metadata)


def tolist(t):
    return [float(x) for x in t.reshape(-1).tolist()]


def export_mlm(vocab_list, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    tok = build_bert_tokenizer(vocab_list, out_dir)
    torch.manual_seed(SEED)
    cfg = BertConfig(vocab_size=len(vocab_list), attn_implementation="eager",
                     **MLM_CONFIG)
    model = BertModel(cfg, add_pooling_layer=False).eval()
    round_to_half(model)
    meta = {
        "format": "pt",
        "kind": "masked_lm",
        "architecture": "bert",
        "num_layers": str(cfg.num_hidden_layers),
        "num_heads": str(cfg.num_attention_heads),
        "hidden_dim": str(cfg.hidden_size),
        "max_positions": str(cfg.max_position_embeddings),
        "layer_norm_eps": repr(cfg.layer_norm_eps),
        "outputs": "attentions,hidden_states",
    }
    save_half(model, os.path.join(out_dir, "model.safetensors"), meta)
    return tok, model


def export_clm(encoder_path, merges_path, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    tok = build_gpt2_tokenizer(encoder_path, merges_path, out_dir)
    torch.manual_seed(SEED + 1)
    cfg = GPT2Config(vocab_size=tok.get_vocab_size(),
                     attn_implementation="eager", **CLM_CONFIG)
    model = GPT2LMHeadModel(cfg).eval()
    round_to_half(model)
    meta = {
        "format": "pt",
        "kind": "causal_lm",
        "architecture": "gpt2",
        "num_layers": str(cfg.n_layer),
        "num_heads": str(cfg.n_head),
        "hidden_dim": str(cfg.n_embd),
        "max_positions": str(cfg.n_positions),
        "layer_norm_eps": repr(cfg.layer_norm_epsilon),
        "bos_token_id": str(tok.token_to_id("<|endoftext|>")),
        "outputs": "logits",
    }
    save_half(model, os.path.join(out_dir, "model.safetensors"), meta,
              drop=("lm_head.",))
    return tok, model


def mlm_parity(tok, model, path):
    cand, ctx = PARITY_PAIR
    enc = tok.encode(cand, ctx)
    ids = torch.tensor([enc.ids])
    types = torch.tensor([enc.type_ids])
    with torch.no_grad():
        out = model(input_ids=ids, token_type_ids=types,
                    output_attentions=True, output_hidden_states=True)
    att = torch.stack([a[0] for a in out.attentions])          # L H T T
    hid = torch.stack([h[0] for h in out.hidden_states[1:]])   # L T D
    fixture = {
        "candidate": cand,
        "context": ctx,
        "full_sequence": enc.ids,
        "type_ids": enc.type_ids,
        "attentions_shape": list(att.shape),
        "attentions": tolist(att),
        "hidden_states_shape": list(hid.shape),
        "hidden_states": tolist(hid),
    }
    with open(path, "w") as f:
        json.dump(fixture, f)


def clm_parity(tok, model, path):
    bos = tok.token_to_id("<|endoftext|>")
    cand, ctx = PARITY_PAIR
    rows = []
    for text in (ctx, cand):
        ids = tok.encode(text).ids
        seq = torch.tensor([[bos] + ids])
        with torch.no_grad():
            logits = model(input_ids=seq).logits[0]
        logp = torch.log_softmax(logits.double(), dim=-1)
        scored = [float(logp[t, ids[t]]) for t in range(len(ids))]
        rows.append({"text": text, "token_ids": ids, "logprobs": scored})
    with open(path, "w") as f:
        json.dump({"bos_token_id": bos, "sequences": rows}, f)


def tokenizer_parity(bert_tok, gpt_tok, path):
    rows = []
    for s in TOKENIZER_STRINGS:
        b = bert_tok.encode(s, add_special_tokens=False)
        g = gpt_tok.encode(s)
        rows.append({"text": s,
                     "wordpiece_ids": b.ids,
                     "wordpiece_offsets": [list(o) for o in b.offsets],
                     "bpe_ids": g.ids})
    with open(path, "w", encoding="utf-8") as f:
        json.dump(rows, f, ensure_ascii=False, indent=1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--bert-vocab", required=True)
    ap.add_argument("--gpt2-encoder", required=True)
    ap.add_argument("--gpt2-merges", required=True)
    ap.add_argument("--out", default="tests/data")
    args = ap.parse_args()

    models = os.path.join(args.out, "models")
    parity = os.path.join(args.out, "parity")
    os.makedirs(parity, exist_ok=True)
    bert_tok, bert = export_mlm(load_bert_vocab(args.bert_vocab),
                                os.path.join(models, "tiny-bert"))
    gpt_tok, gpt = export_clm(args.gpt2_encoder, args.gpt2_merges,
                              os.path.join(models, "tiny-gpt2"))
    mlm_parity(bert_tok, bert, os.path.join(parity, "mlm_parity.json"))
    clm_parity(gpt_tok, gpt, os.path.join(parity, "clm_parity.json"))
    tokenizer_parity(bert_tok, gpt_tok,
                     os.path.join(parity, "tokenizer_parity.json"))


if __name__ == "__main__":
    main()
