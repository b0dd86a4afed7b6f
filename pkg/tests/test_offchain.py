"""Content-addressed store tests: keys, rewrites, persistence."""
import numpy as np
import pytest

from fedunlearn.chameleon import (
    TrapdoorMismatch,
    ch_gen,
    ch_hash,
    ch_setup,
    ch_verify,
    digest_update,
    serialize_update,
)
from fedunlearn.offchain import OffchainStore, UnknownKey

PARAMS = ch_setup(16, seed=1)
ALICE = ch_gen(PARAMS, seed=2)
BOB = ch_gen(PARAMS, seed=3)


def store_with_entry():
    store = OffchainStore()
    vec = np.array([1.0, -2.0, 0.5])
    key = store.put("alice", vec, ALICE.pk, 9)
    return store, key, vec


def test_key_is_the_chameleon_hash():
    store, key, vec = store_with_entry()
    assert key == ch_hash(ALICE.pk, digest_update(vec, PARAMS), 9)
    payload, randomizer = store.get(key)
    assert np.array_equal(payload, vec)
    assert randomizer == 9
    assert store.payload_bytes(key) == serialize_update(vec)


def test_put_registers_owner_key():
    store, key, _ = store_with_entry()
    assert store.owner_key("alice") == ALICE.pk
    with pytest.raises(KeyError):
        store.owner_key("nobody")


def test_conflicting_owner_key_rejected():
    store, _, _ = store_with_entry()
    with pytest.raises(ValueError):
        store.register_owner("alice", BOB.pk)


def test_unknown_key_raises():
    store, _, _ = store_with_entry()
    with pytest.raises(UnknownKey):
        store.get(424242)
    with pytest.raises(UnknownKey):
        store.entry(424242)


def test_owner_rewrite_keeps_key_and_discards_bytes():
    store, key, vec = store_with_entry()
    original = store.payload_bytes(key)
    new_r = store.rewrite_entry(key, ALICE.x, np.random.default_rng(0))
    assert key in store.keys()
    payload, randomizer = store.get(key)
    assert randomizer == new_r != 9
    assert not np.array_equal(payload, vec)
    assert store.payload_bytes(key) != original
    assert store.entry(key).rewritten
    # the commitment still verifies against the same key
    assert ch_verify(ALICE.pk, digest_update(payload, PARAMS), key, new_r)


def test_rewrite_respects_replacement_scale():
    store = OffchainStore(replacement_scale=0.25)
    vec = np.linspace(-3, 3, 40)
    key = store.put("alice", vec, ALICE.pk, 4)
    store.rewrite_entry(key, ALICE.x, np.random.default_rng(1))
    payload, _ = store.get(key)
    assert payload.size == vec.size
    assert np.all(np.abs(payload) <= 0.25)


def test_foreign_trapdoor_rejected_without_mutation():
    store, key, vec = store_with_entry()
    before = store.payload_bytes(key)
    with pytest.raises(TrapdoorMismatch):
        store.rewrite_entry(key, BOB.x, np.random.default_rng(2))
    assert store.payload_bytes(key) == before
    assert not store.entry(key).rewritten
    assert store.get(key)[1] == 9


def test_idempotent_re_put_is_allowed():
    store, key, vec = store_with_entry()
    assert store.put("alice", vec, ALICE.pk, 9) == key
    assert len(store) == 1


def test_colliding_put_of_distinct_entry_rejected():
    # In the tiny 11-element fixture group a genuine key collision is easy to
    # construct with the trapdoor: solve for the randomizer that maps a second
    # payload onto the first payload's key.
    from fedunlearn.chameleon import ChameleonParams, KeyPair, PublicKey, ch_rewrite

    tiny = ChameleonParams(23, 11, 2, 4)
    keys = KeyPair(PublicKey(tiny, 8), 3)
    store = OffchainStore()
    vec_a, vec_b = np.array([1.0, 2.0]), np.array([3.0, 4.0])
    key = store.put("alice", vec_a, keys.pk, 7)
    d_a = digest_update(vec_a, tiny)
    d_b = digest_update(vec_b, tiny)
    r_b = ch_rewrite(keys, d_a, d_b, 7)
    assert ch_hash(keys.pk, d_b, r_b) == key
    with pytest.raises(RuntimeError):
        store.put("alice", vec_b, keys.pk, r_b)


def test_directory_round_trip(tmp_path):
    store, key, _ = store_with_entry()
    store.put("bob", np.array([4.0]), BOB.pk, 2)
    store.rewrite_entry(key, ALICE.x, np.random.default_rng(3))
    store.save_dir(tmp_path)
    files = sorted(tmp_path.glob("*.entry"))
    assert len(files) == 2

    reloaded = OffchainStore.load_dir(tmp_path)
    assert sorted(reloaded.keys()) == sorted(store.keys())
    for k in store.keys():
        assert reloaded.payload_bytes(k) == store.payload_bytes(k)
        assert reloaded.entry(k).owner == store.entry(k).owner
        assert reloaded.entry(k).randomizer == store.entry(k).randomizer
        assert reloaded.entry(k).rewritten == store.entry(k).rewritten


def test_save_dir_drops_stale_entries(tmp_path):
    store, key, _ = store_with_entry()
    store.save_dir(tmp_path)
    (tmp_path / "deadbeef.entry").write_bytes(b"junk")
    store.save_dir(tmp_path)
    assert sorted(p.stem for p in tmp_path.glob("*.entry")) == [f"{key:x}"]


def test_corrupt_entry_file_rejected(tmp_path):
    store, key, _ = store_with_entry()
    store.save_dir(tmp_path)
    target = next(tmp_path.glob("*.entry"))
    target.write_bytes(b"XXXX" + target.read_bytes()[4:])
    with pytest.raises(ValueError):
        OffchainStore.load_dir(tmp_path)


def test_replacement_scale_must_be_positive():
    with pytest.raises(ValueError):
        OffchainStore(replacement_scale=0.0)
