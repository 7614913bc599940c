"""Hashed n-gram featurizer and the streaming linear baseline."""

import random

import numpy as np
import pytest

from learner import data
from learner.ngram import NGramModel, featurize, fit_pairs, ngram_baseline


class TestFeaturize:
    def test_rows_are_independent(self, vocab):
        r1 = ["x0", "x1", "add"]
        r2 = ["mul", "x2"]
        both = featurize([r1, r2], vocab).toarray()
        alone = featurize([r1], vocab).toarray()
        assert np.array_equal(both[0], alone[0])

    def test_no_window_straddles_records(self, vocab):
        # bigram (x1, mul) exists only when the rows are concatenated
        split = featurize([["x0", "x1"], ["mul"]], vocab).toarray().sum()
        joined = featurize([["x0", "x1", "mul"]], vocab).toarray().sum()
        assert joined > split

    def test_window_counts(self, vocab):
        row = ["x0", "x1", "add", "mul", "sub", "x2"]  # length 6
        total = featurize([row], vocab, max_n=5).sum()
        assert total == sum(6 - n + 1 for n in range(1, 6))

    def test_count_features(self, vocab):
        once = featurize([["x0"]], vocab).toarray()
        thrice = featurize([["x0", "x0", "x0"]], vocab).toarray()
        # the unigram bucket for x0 counts occurrences
        assert thrice.max() == 3.0
        assert np.argmax(thrice) == np.argmax(once)


class TestFitPairs:
    def test_single_class_training_predicts_that_class_always(self, vocab):
        pairs = [(["x0", "add"], ["true"]), (["x1"], ["true"])]
        model = fit_pairs(pairs, vocab)
        assert model.predict([["sin", "x2"], ["x0"]]) == [["true"], ["true"]]

    def test_token_presence_rule_is_learnable(self, vocab):
        # label = presence of "sin": linearly separable in unigram space
        rng = random.Random(13)
        words = ["x0", "x1", "add", "mul", "cos", "exp", "1", "2"]
        def make(n, seed_extra):
            out = []
            r = random.Random(seed_extra)
            for i in range(n):
                row = [r.choice(words) for _ in range(r.randrange(4, 10))]
                if i % 2 == 0:
                    row.insert(r.randrange(len(row)), "sin")
                out.append((row, ["true" if i % 2 == 0 else "false"]))
            return out

        model = fit_pairs(make(400, 1), vocab, passes=6, alpha=1e-7)
        test = make(200, 2)
        preds = model.predict([s for s, _ in test])
        acc = sum(p == t for p, (_, t) in zip(preds, test)) / len(test)
        assert acc >= 0.95


class TestShardBaseline:
    def test_balanced_stability_baseline_recorded(self, stability_shard, vocab_path, capsys):
        report = ngram_baseline(
            [stability_shard], [stability_shard], vocab_path, passes=4
        )
        assert report.metric == "exact-class"
        assert 0.0 <= report.overall <= 1.0
        # empirical training-set accuracy, recorded for the log, not pinned
        print(f"\nn-gram train-set accuracy on balanced stability: {report.overall:.3f}")

    def test_oracle_check_runs_before_training(self, stability_shard, tmp_path, vocab_path):
        import shutil

        bad = tmp_path / "drift-0.tsv"
        lines = open(stability_shard).read().splitlines()
        src, tgt = lines[5].split("\t")
        lines[5] = src + "\t" + ("false" if tgt == "true" else "true")
        bad.write_text("\n".join(lines) + "\n")
        shutil.copy(data.meta_path(stability_shard), data.meta_path(bad))
        from learner.metrics import OracleMismatch

        with pytest.raises(OracleMismatch):
            ngram_baseline([str(bad)], [str(bad)], vocab_path)
