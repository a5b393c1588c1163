#!/usr/bin/env python3
"""Direct numpy evaluation of the gated message-passing encoder.

Writes encoder_fixtures.json next to this file. Parameters are stored in the
checkpoint layout (row-major tensors) so the C++ side can load them as-is.

    python3 tests/reference/encoder_reference.py
"""
import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).with_name("encoder_fixtures.json")


def linear(rng, out_dim, in_dim):
    return {"w": rng.uniform(-0.8, 0.8, size=(out_dim, in_dim)),
            "b": rng.uniform(-0.3, 0.3, size=out_dim)}


def make_params(rng, d_in, d_h, d_llm, layers):
    p = {"lift": linear(rng, d_h, d_in), "layers": []}
    for _ in range(layers):
        p["layers"].append({"alpha": linear(rng, 1, d_h + d_in),
                            "beta": linear(rng, 1, d_h + d_in),
                            "msg": linear(rng, d_h, 2 * d_h + 2 * d_in)})
    p["gamma"] = linear(rng, 1, 2 * d_in)
    p["query_proj"] = linear(rng, d_h, d_in)
    p["proj0"] = linear(rng, d_llm, d_h)
    p["proj1"] = linear(rng, d_llm, d_llm)
    p["dims"] = {"d_in": d_in, "d_hidden": d_h, "d_llm": d_llm, "layers": layers}
    return p


def checkpoint(p, head=None, vocab=None):
    tensors = {}

    def put(name, lin):
        tensors[name + ".weight"] = {"shape": list(lin["w"].shape),
                                     "data": lin["w"].reshape(-1).tolist()}
        tensors[name + ".bias"] = {"shape": [lin["b"].shape[0]], "data": lin["b"].tolist()}

    put("lift", p["lift"])
    for l, layer in enumerate(p["layers"]):
        for key in ("alpha", "beta", "msg"):
            put(f"layers.{l}.{key}", layer[key])
    put("gamma", p["gamma"])
    put("query_proj", p["query_proj"])
    put("projector.0", p["proj0"])
    put("projector.1", p["proj1"])
    out = {"format_version": 1, "seed": 0, "dims": p["dims"], "tensors": tensors}
    if head is not None:
        put("head", head)
        out["vocab"] = vocab
    return out


def apply(lin, x):
    return lin["w"] @ x + lin["b"]


# zeta for edge i->j at layer l: tanh(alpha(h_i, q) + gamma(z_e, q) - beta(h_j, q))
def gate(p, l, h_i, h_j, z_e, q):
    layer = p["layers"][l]
    a = apply(layer["alpha"], np.concatenate([h_i, q]))[0]
    b = apply(layer["beta"], np.concatenate([h_j, q]))[0]
    g = apply(p["gamma"], np.concatenate([z_e, q]))[0]
    return np.tanh(a + g - b)


def layer_step(p, l, states, edges, edge_feats, q):
    n = len(states)
    incoming = [[] for _ in range(n)]
    gates = []
    for e, (u, v) in enumerate(edges):
        for i, j in ((u, v), (v, u)):
            z = gate(p, l, states[i], states[j], edge_feats[e], q)
            msg = apply(p["layers"][l]["msg"],
                        np.concatenate([states[i], states[j], edge_feats[e], q]))
            incoming[j].append(z * msg)
            gates.append({"src": i, "dst": j, "edge": e, "zeta": z})
    new = []
    for j in range(n):
        if incoming[j]:
            new.append(sum(incoming[j]) / len(incoming[j]))
        else:
            new.append(states[j].copy())
    return new, gates


def encode(p, node_feats, edges, edge_feats, q):
    states = [apply(p["lift"], z) for z in node_feats]
    for l in range(len(p["layers"])):
        states, _ = layer_step(p, l, states, edges, edge_feats, q)
    return sum(states) / len(states)


def project(p, z):
    return apply(p["proj1"], np.tanh(apply(p["proj0"], z)))


def cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def graph_prompt(p, graph, demos, q):
    zs = [encode(p, *graph, q)] + [encode(p, *d, q) for d in demos]
    if len(zs) == 1:
        return project(p, zs[0])
    key = apply(p["query_proj"], q)
    s = np.array([cosine(key, z) for z in zs])
    w = np.exp(s - s.max())
    w /= w.sum()
    return project(p, sum(wi * z for wi, z in zip(w, zs)))


def graph_json(g):
    feats, edges, efeats = g
    return {"nodes": [f.tolist() for f in feats],
            "edges": [{"src": u, "dst": v, "features": ef.tolist()}
                      for (u, v), ef in zip(edges, efeats)]}


def random_graph(rng, n, m, d_in):
    feats = [rng.normal(size=d_in) for _ in range(n)]
    edges = []
    while len(edges) < m:
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        if u != v:
            edges.append((u, v))
    return feats, edges, [rng.normal(size=d_in) for _ in edges]


def layer_fixtures():
    out = []
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        d_in = int(rng.integers(2, 5))
        d_h = int(rng.integers(2, 6))
        layers = int(rng.integers(1, 4))
        p = make_params(rng, d_in, d_h, 3, layers)
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 2 * n))
        feats, edges, efeats = random_graph(rng, n, m, d_in)
        q = rng.normal(size=d_in)
        states = [rng.normal(size=d_h) for _ in range(n)]
        layer = int(rng.integers(0, layers))
        new, gates = layer_step(p, layer, states, edges, efeats, q)
        out.append({"seed": seed, "params": checkpoint(p), "graph": graph_json((feats, edges, efeats)),
                    "query": q.tolist(), "layer": layer,
                    "states": [s.tolist() for s in states],
                    "gates": gates, "expected_states": [s.tolist() for s in new]})
    return out


def mushroom_fixture():
    # 0 "mushroom", 1 "a cut peony", 2 "a flying eagle"; edge 1 -> 0 "is food for".
    rng = np.random.default_rng(7)
    p = make_params(rng, 8, 6, 5, 3)
    feats = [rng.normal(size=8) for _ in range(3)]
    edges = [(1, 0)]
    efeats = [rng.normal(size=8)]
    q = rng.normal(size=8)
    z = encode(p, feats, edges, efeats, q)
    return {"params": checkpoint(p), "graph": graph_json((feats, edges, efeats)),
            "query": q.tolist(), "z_s": z.tolist(), "p_graph": project(p, z).tolist()}


def loss_fixture():
    rng = np.random.default_rng(11)
    p = make_params(rng, 4, 5, 6, 2)
    vocab = ["yes", "no", "maybe"]
    head = linear(rng, len(vocab), 6)
    batch = []
    total = 0.0
    for i in range(3):
        g = random_graph(rng, 3 + i % 2, 2 + i % 2, 4)
        demos = [random_graph(rng, 2, 1, 4) for _ in range(i)]
        q = rng.normal(size=4)
        label = i % len(vocab)
        logits = apply(head, graph_prompt(p, g, demos, q))
        top = logits.max()
        total += top + np.log(np.exp(logits - top).sum()) - logits[label]
        batch.append({"graph": graph_json(g), "demos": [graph_json(d) for d in demos],
                      "query": q.tolist(), "label": label})
    return {"params": checkpoint(p, head, vocab), "batch": batch, "loss": total / len(batch)}


def main():
    data = {"layers": layer_fixtures(), "mushroom": mushroom_fixture(), "loss": loss_fixture()}
    OUT.write_text(json.dumps(data, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
