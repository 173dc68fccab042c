import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from digmol.data import (
    DatasetFile,
    MissingColumn,
    NoValidMolecules,
    RunConfig,
    UnknownConfigKey,
    export_embeddings,
    load_dataset,
    pca_2d,
    read_dataset_text,
)
from digmol.smiles import parse_smiles


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_malformed_row_is_reported(tmp_path):
    ds = load_dataset(write(tmp_path, "smiles,y\nCCO,1\nC1CC,0\nc1ccccc1,0\n"))
    assert len(ds) == 2 and ds.labels.tolist() == [[1.0], [0.0]]
    assert [row for row, _ in ds.failures] == [2]
    assert ds.rows == [1, 3]


def test_empty_label_is_missing(tmp_path):
    ds = load_dataset(write(tmp_path, "smiles,a,b\nCCO,1,\nCC,,0\n"))
    assert ds.missing_mask.tolist() == [[False, True], [True, False]]
    assert ds.task_names == ["a", "b"]


def test_duplicates_kept(tmp_path):
    ds = load_dataset(write(tmp_path, "smiles,y\nCC,1\nCC,1\n"))
    assert len(ds) == 2


def test_quoted_fields_and_column_selection(tmp_path):
    ds = load_dataset(write(tmp_path, 'name,smiles,y,z\n"ethanol, plain",CCO,1,5\n'), label_columns=("z",))
    assert ds.labels.tolist() == [[5.0]] and ds.smiles == ["CCO"]


def test_bad_labels_and_widths_reported(tmp_path):
    ds = load_dataset(write(tmp_path, "smiles,y\nCC,abc\nCC,1,2\nCC,inf\nCCC,0\n"))
    assert len(ds) == 1 and len(ds.failures) == 3


def test_missing_column_and_no_molecules(tmp_path):
    with pytest.raises(MissingColumn):
        load_dataset(write(tmp_path, "mol,y\nCC,1\n"))
    with pytest.raises(MissingColumn):
        load_dataset(write(tmp_path, "smiles,y\nCC,1\n"), label_columns=("q",))
    with pytest.raises(MissingColumn):
        load_dataset(write(tmp_path, ""))
    with pytest.raises(NoValidMolecules):
        load_dataset(write(tmp_path, "smiles,y\nC1,1\n"))


@given(st.text(max_size=200))
def test_reader_is_total(text):
    try:
        ds = read_dataset_text("smiles,y\n" + text, DatasetFile("mem"))
    except NoValidMolecules:
        return
    assert len(ds.graphs) == ds.labels.shape[0]


def test_run_config_round_trip():
    cfg = RunConfig(epochs=7, lr=0.01, mode="gcn", dropout=0.1)
    assert RunConfig.from_text(cfg.to_text()) == cfg


def test_run_config_parsing():
    cfg = RunConfig.from_text("# comment\nepochs = 3\n\ntemperature=0.2  # inline\n")
    assert cfg.epochs == 3 and cfg.temperature == 0.2 and cfg.batch_size == 32
    with pytest.raises(UnknownConfigKey):
        RunConfig.from_text("learning_rate=0.1\n")
    with pytest.raises(ValueError):
        RunConfig.from_text("epochs\n")
    with pytest.raises(UnknownConfigKey):
        RunConfig().override(nope=1)


def test_run_config_builds_stage_configs():
    cfg = RunConfig(emb_dim=8, num_layer=2, momentum=0.9, temperature=0.5, seed=4)
    pre = cfg.pretrain_config()
    assert pre.encoder.hidden == 8 and pre.encoder.n_layers == 2
    assert pre.m == 0.9 and pre.tau == 0.5 and pre.augment.seed == 4
    assert cfg.finetune_config().seed == 4


def test_pca_of_two_columns_is_a_rotation():
    x = np.random.default_rng(0).standard_normal((30, 2)) @ np.array([[3.0, 1.0], [0.0, 0.5]])
    p = pca_2d(x)
    centered = x - x.mean(axis=0)
    # a rotation (or reflection) preserves pairwise distances and the total spread
    assert np.allclose(np.linalg.norm(p, axis=1), np.linalg.norm(centered, axis=1), rtol=1e-9)
    assert abs(p[:, 0] @ p[:, 1]) < 1e-8
    assert p[:, 0].var() >= p[:, 1].var()


def test_pca_matches_svd():
    x = np.random.default_rng(1).standard_normal((40, 6)) * np.arange(1, 7)
    p = pca_2d(x)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    ref = centered @ vt[:2].T
    assert np.allclose(np.abs(p), np.abs(ref), atol=1e-8)


def test_export_embeddings(tiny_checkpoint, tiny_corpus, tmp_path):
    graphs = [tiny_corpus[0], tiny_corpus[0]] + list(tiny_corpus[1:])
    out = tmp_path / "e.csv"
    table = export_embeddings(tiny_checkpoint, graphs, out, ids=range(100, 100 + len(graphs)))
    assert np.array_equal(table[0, :16], table[1, :16])
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["id"] + [f"h{i}" for i in range(16)] + ["pc1", "pc2"]
    assert rows[1][0] == "100" and len(rows) == len(graphs) + 1


def test_export_golden_first_row(tiny_checkpoint, tiny_corpus):
    t = export_embeddings(tiny_checkpoint, tiny_corpus)
    assert t[0, :3].tolist() == pytest.approx(
        [0.009922270731712608, 0.0015674781970401706, 0.006511229407897199], rel=1e-9
    )
    assert t[0, -2:].tolist() == pytest.approx([-0.0025694142577592405, 0.0006039631507943979], rel=1e-7)


def test_parse_smiles_still_available_for_datasets():
    assert parse_smiles("CCO").n_nodes == 3
