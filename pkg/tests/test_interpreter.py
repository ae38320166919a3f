import pytest

from procforge import interp
from procforge.interp import (
    AttributeNotUpdatable,
    DuplicateRecord,
    FeatureDisabled,
    FungibleLedger,
    InsufficientAllowance,
    InsufficientBalance,
    MissingAddressBinding,
    NonFungibleStore,
    TransferDisabled,
    Unauthorized,
    UnknownRecord,
    UnknownRegistryAddress,
    UnknownTask,
    new_instance,
    pseudo_address,
)
from procforge.marking import compile_marking
from procforge.registry import (
    AttributeDecl,
    FungibleRegistrySpec,
    NonFungibleRegistrySpec,
)

A1 = "0x" + "1" * 40
A2 = "0x" + "2" * 40
A3 = "0x" + "3" * 40
MINTER = "0x" + "e" * 40


def ledger(**kw):
    parts = dict(name="Coin", symbol="C", decimals=0, total_supply=100,
                 initially_distributed_accounts=((A1, 100),))
    parts.update(kw)
    return FungibleLedger(FungibleRegistrySpec(**parts))


def conserved(lg):
    return sum(lg.balances.values()) == lg.total_supply


def test_transfer_and_conservation():
    lg = ledger()
    lg.transfer(A1, A2, 40)
    assert lg.balance_of(A1) == 60 and lg.balance_of(A2) == 40
    assert conserved(lg)


def test_transfer_insufficient():
    lg = ledger()
    with pytest.raises(InsufficientBalance):
        lg.transfer(A2, A1, 1)
    assert conserved(lg)


def test_approve_transfer_from():
    lg = ledger()
    lg.approve(A1, A2, 30)
    assert lg.allowance(A1, A2) == 30
    lg.transfer_from(A2, A1, A3, 25)
    assert lg.balance_of(A3) == 25 and lg.allowance(A1, A2) == 5
    with pytest.raises(InsufficientAllowance):
        lg.transfer_from(A2, A1, A3, 6)
    assert conserved(lg)


def test_mint_requires_authorization():
    lg = ledger(is_mintable=True, minter_addresses=(MINTER,))
    lg.mint(MINTER, A2, 50)
    assert lg.total_supply == 150 and conserved(lg)
    with pytest.raises(Unauthorized):
        lg.mint(A1, A2, 1)
    with pytest.raises(FeatureDisabled):
        ledger().mint(MINTER, A2, 1)


def test_burn():
    lg = ledger(is_burnable=True, burner_addresses=(MINTER,))
    lg.burn(MINTER, A1, 30)
    assert lg.total_supply == 70 and conserved(lg)
    with pytest.raises(InsufficientBalance):
        lg.burn(MINTER, A2, 1)


def test_address_keys_case_insensitive():
    lg = ledger()
    lg.transfer(A1.upper().replace("0X", "0x"), A2, 10)
    assert lg.balance_of(A2.upper().replace("0X", "0x")) == 10


# --- record store ------------------------------------------------------------


def store(**kw):
    parts = dict(
        name="Title", registry_type="single",
        attributes=(AttributeDecl("weight", "uint256", history_tracked=True),
                    AttributeDecl("note", "string", updatable=True)),
        is_ownership_transfer_enabled=True)
    parts.update(kw)
    return NonFungibleStore(NonFungibleRegistrySpec(**parts))


def test_record_lifecycle():
    s = store()
    s.record_create(A1, A3, owner=A1, attrs={"weight": 10, "note": "n"})
    assert s.record_get_owner(A3) == A1
    assert s.record_get_attrs(A3) == (10, "n")
    s.record_update(A1, A3, "note", "updated")
    assert s.record_get_attrs(A3) == (10, "updated")
    s.record_ownership_transfer(A1, A3, A2)
    assert s.record_get_owner(A3) == A2


def test_duplicate_and_unknown_records():
    s = store()
    s.record_create(A1, A3, owner=A1, attrs={"weight": 1, "note": ""})
    with pytest.raises(DuplicateRecord):
        s.record_create(A1, A3, owner=A1, attrs={"weight": 1, "note": ""})
    with pytest.raises(UnknownRecord):
        s.record_get_owner(A2)


def test_attrs_must_match_declaration():
    s = store()
    with pytest.raises(interp.RegistryError):
        s.record_create(A1, A3, owner=A1, attrs={"weight": 1})


def test_non_updatable_attribute():
    s = store()
    s.record_create(A1, A3, owner=A1, attrs={"weight": 1, "note": ""})
    with pytest.raises(AttributeNotUpdatable):
        s.record_update(A1, A3, "weight", 2)


def test_history_tracking():
    s = store(attributes=(AttributeDecl("note", "string", updatable=True,
                                        history_tracked=True),))
    s.record_create(A1, A3, owner=A1, attrs={"note": "a"})
    s.record_update(A1, A3, "note", "b")
    rec = s.records[A3]
    assert rec.history == [("note", "a"), ("note", "b")]


def test_transfer_disabled():
    s = store(is_ownership_transfer_enabled=False)
    s.record_create(A1, A3, owner=A1, attrs={"weight": 1, "note": ""})
    with pytest.raises(TransferDisabled):
        s.record_ownership_transfer(A1, A3, A2)


def test_bpmn_restriction_and_process_transfer():
    s = store(is_record_creation_restricted_to_bpmn=True,
              is_ownership_transfer_enabled_to_bpmn=True)
    proc = pseudo_address("proc")
    s.bind_process(proc)
    with pytest.raises(Unauthorized):
        s.record_create(A1, A3, owner=A1, attrs={"weight": 1, "note": ""})
    s.record_create(proc, A3, owner=proc, attrs={"weight": 1, "note": ""})
    # the bound process may move records it does not own
    s.record_ownership_transfer(proc, A3, A2)
    assert s.record_get_owner(A3) == A2
    with pytest.raises(Unauthorized):
        s.record_ownership_transfer(A1, A3, A1)


def test_record_access_control():
    s = store(is_registry_record_access_control_enabled=True)
    s.record_create(A1, A3, owner=A1, attrs={"weight": 1, "note": ""})
    with pytest.raises(Unauthorized):
        s.record_update(A2, A3, "note", "x")
    s.record_update(A1, A3, "note", "x")


def test_pseudo_address_shape_and_determinism():
    a = pseudo_address("x")
    assert a.startswith("0x") and len(a) == 42
    assert a == pseudo_address("x") and a != pseudo_address("y")


# --- instances ---------------------------------------------------------------


def grain_registries():
    from conftest import FIXTURES
    from procforge.registry import parse_registry
    lrk = FungibleLedger(parse_registry((FIXTURES / "lrk.json").read_text()))
    title = NonFungibleStore(parse_registry((FIXTURES / "grain_title.json").read_text()))
    return {
        "0xD3E4EBe81b55EA73b559da31ADf2CAc3b254ea11": lrk,
        "0xA9998dBe75D795556eA821E37cD2DE1F373BFd91": title,
    }


BUYER = "0x" + "2" * 40
SWAP_EVENTS = [
    ("Registration request submitted", {}, None),
    ("Grain sample taken", {}, None),
    ("Grain quality evaluated", {"quality": 8}, None),
    ("Truck carrying grain is weighed", {"weightGross": 12000}, None),
    ("Grain dropped at silo", {}, None),
    ("Truck is weighed again", {"weightTare": 7000}, None),
    ("Interest to buy title expressed", {"deposit": 500, "buyer": BUYER}, BUYER),
    ("Asset Swap", {}, None),
]


def test_grain_swap_end_state(grain_model, grain_automaton):
    inst = new_instance(grain_model, grain_automaton, registries=grain_registries())
    for task, args, caller in SWAP_EVENTS:
        assert inst.invoke(task, args, caller).ok
    assert inst.status == "Completed"
    title = inst.registry_at("0xA9998dBe75D795556eA821E37cD2DE1F373BFd91")
    lrk = inst.registry_at("0xD3E4EBe81b55EA73b559da31ADf2CAc3b254ea11")
    assert title.record_get_owner(inst.env["titleId"]) == BUYER
    assert lrk.balance_of("0x" + "1" * 40) == 500  # farmer got the price
    assert lrk.balance_of(BUYER) == 200000 - 500


def test_out_of_order_task_rejected_without_side_effects(grain_model, grain_automaton):
    inst = new_instance(grain_model, grain_automaton, registries=grain_registries())
    before = inst.marking
    outcome = inst.invoke("Grain quality evaluated", {"quality": 1})
    assert not outcome.ok and outcome.reason == "NotEnabled"
    assert inst.marking == before
    assert inst.status == "Running-with-rejections"
    assert inst.event_log[-1].task == "Grain quality evaluated"


def test_failed_registry_call_rolls_back_marking(grain_model, grain_automaton):
    inst = new_instance(grain_model, grain_automaton, registries=grain_registries())
    for task, args, caller in SWAP_EVENTS[:6]:
        assert inst.invoke(task, args, caller).ok
    before_marking = inst.marking
    lrk = inst.registry_at("0xD3E4EBe81b55EA73b559da31ADf2CAc3b254ea11")
    before_balance = lrk.balance_of(BUYER)
    # deposit larger than the buyer's balance: transfer fails inside the task
    outcome = inst.invoke("Interest to buy title expressed",
                          {"deposit": 10**9, "buyer": BUYER}, BUYER)
    assert not outcome.ok and outcome.reason == "RegistryError"
    assert inst.marking == before_marking
    lrk = inst.registry_at("0xD3E4EBe81b55EA73b559da31ADf2CAc3b254ea11")
    assert lrk.balance_of(BUYER) == before_balance
    # the instance still accepts the correct continuation
    assert inst.invoke("Interest to buy title expressed",
                       {"deposit": 500, "buyer": BUYER}, BUYER).ok


def test_unknown_task_raises(grain_model, grain_automaton):
    inst = new_instance(grain_model, grain_automaton, registries=grain_registries())
    with pytest.raises(UnknownTask):
        inst.invoke("No such task")


def test_missing_address_binding():
    from conftest import load_model
    model = load_model("grain_title_unbound")
    automaton = compile_marking(model)
    with pytest.raises(MissingAddressBinding):
        new_instance(model, automaton, registries=grain_registries())


def test_unknown_registry_address(grain_model, grain_automaton):
    with pytest.raises(UnknownRegistryAddress):
        new_instance(grain_model, grain_automaton, registries={})


def test_instance_addresses_unique_per_sequence(grain_model, grain_automaton):
    i0 = new_instance(grain_model, grain_automaton, registries=grain_registries(),
                      instance_seq=0)
    i1 = new_instance(grain_model, grain_automaton, registries=grain_registries(),
                      instance_seq=1)
    assert i0.process_address != i1.process_address
