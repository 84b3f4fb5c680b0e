import socket
import struct
import time

import pytest
from hypothesis import given, settings, strategies as st

from oracles import ref_matmul
from vplat.bus import RESP_ADDRESS_ERROR, RESP_COMMAND_ERROR, RESP_OK, read_txn, write_txn
from vplat.kernel import SimKernel
from vplat.peripherals import PS_PER_S, Accelerator, Ram, SimCtrl, Uart


def make_accel(ram_size=1 << 20, clock_hz=100_000_000, base_cycles=16,
               cycles_per_mac=1):
    kernel = SimKernel()
    ram = Ram(ram_size)
    irq_line = []
    accel = Accelerator(
        ram, kernel, lambda level: irq_line.append(level),
        clock_hz, base_cycles, cycles_per_mac,
    )
    return kernel, ram, accel, irq_line


def reg_write(dev, offset, value):
    txn = dev_txn = write_txn(0, struct.pack("<I", value))
    dev_txn.address = offset
    dev.access(offset, txn)
    return txn


def reg_read(dev, offset):
    txn = read_txn(offset, 4)
    dev.access(offset, txn)
    assert txn.response == RESP_OK
    return txn.value()


class TestRam:
    def test_zero_initialized(self):
        ram = Ram(64)
        txn = read_txn(0, 4)
        ram.access(60, txn)
        assert txn.value() == 0

    def test_load_image_roundtrip(self):
        ram = Ram(64)
        ram.load_image(b"\x01\x02\x03\x04", 0)
        txn = read_txn(0, 4)
        ram.access(0, txn)
        assert bytes(txn.data) == b"\x01\x02\x03\x04"

    def test_empty_image_noop(self):
        ram = Ram(16)
        ram.load_image(b"", 0)
        assert bytes(ram.storage) == bytes(16)

    def test_image_overrun_rejected(self):
        ram = Ram(16)
        with pytest.raises(ValueError):
            ram.load_image(b"\0" * 17, 0)
        with pytest.raises(ValueError):
            ram.load_image(b"\0" * 8, 12)


class TestUart:
    def test_capture_is_ordered_and_lossless(self):
        uart = Uart()
        for byte in b"Hi":
            reg_write(uart, Uart.TXDATA, byte)
        assert bytes(uart.capture) == b"Hi"

    def test_nul_byte_captured_verbatim(self):
        uart = Uart()
        reg_write(uart, Uart.TXDATA, 0x100)  # only the low byte transmits
        assert bytes(uart.capture) == b"\x00"

    def test_status_always_ready(self):
        uart = Uart()
        assert reg_read(uart, Uart.STATUS) == 1

    def test_txdata_is_write_only(self):
        uart = Uart()
        txn = read_txn(0, 4)
        uart.access(Uart.TXDATA, txn)
        assert txn.response == RESP_COMMAND_ERROR

    def test_tcp_stream_mirrors_capture(self):
        uart = Uart(port=-1)
        try:
            client = socket.create_connection(("127.0.0.1", uart.port), timeout=2)
            time.sleep(0.05)  # accept loop picks the client up
            for byte in b"abc":
                reg_write(uart, Uart.TXDATA, byte)
            client.settimeout(2)
            got = b""
            while len(got) < 3:
                got += client.recv(16)
            assert got == b"abc"
            client.close()
        finally:
            uart.close()

    def test_capture_complete_without_clients(self):
        uart = Uart(port=-1)
        try:
            reg_write(uart, Uart.TXDATA, ord("x"))
            assert bytes(uart.capture) == b"x"
        finally:
            uart.close()


class TestSimCtrl:
    def test_exit_requests_kernel_stop(self):
        kernel = SimKernel()
        ctrl = SimCtrl(kernel)
        reg_write(ctrl, SimCtrl.EXIT, 0)
        assert kernel.stop_pending and kernel.stop_code == 0

    def test_exit_code_masked_to_byte(self):
        kernel = SimKernel()
        ctrl = SimCtrl(kernel)
        reg_write(ctrl, SimCtrl.EXIT, 0x1FF)
        assert kernel.stop_code == 0xFF


def program(accel, m, n, k, src_a=0x1000, src_b=0x2000, dst=0x3000):
    reg_write(accel, Accelerator.SRC_A, src_a)
    reg_write(accel, Accelerator.SRC_B, src_b)
    reg_write(accel, Accelerator.DST, dst)
    reg_write(accel, Accelerator.DIM_M, m)
    reg_write(accel, Accelerator.DIM_N, n)
    reg_write(accel, Accelerator.DIM_K, k)


class TestAccelerator:
    def test_status_zero_after_reset(self):
        _, _, accel, _ = make_accel()
        assert reg_read(accel, Accelerator.STATUS) == 0

    def test_identity_times_b_is_b(self):
        kernel, ram, accel, _ = make_accel()
        ram.write_words(0x1000, [1, 0, 0, 1])
        b = [5, 6, 7, 8]
        ram.write_words(0x2000, b)
        program(accel, 2, 2, 2)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        assert reg_read(accel, Accelerator.STATUS) == Accelerator.ST_BUSY
        kernel.run()
        assert ram.read_words(0x3000, 4) == b
        assert reg_read(accel, Accelerator.STATUS) == Accelerator.ST_DONE

    def test_completion_delay_formula(self):
        # 16 + 2*2*2*1 = 24 cycles at 100 MHz -> 240 ns
        kernel, ram, accel, _ = make_accel()
        ram.write_words(0x1000, [0] * 4)
        ram.write_words(0x2000, [0] * 4)
        program(accel, 2, 2, 2)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        kernel.run()
        assert kernel.now() == 240_000

    @settings(max_examples=60, deadline=None)
    @given(
        m=st.integers(1, 8), n=st.integers(1, 8), k=st.integers(1, 8),
        data=st.data(),
    )
    def test_matmul_matches_reference(self, m, n, k, data):
        kernel, ram, accel, _ = make_accel()
        word = st.integers(0, 0xFFFFFFFF)
        a = data.draw(st.lists(word, min_size=m * k, max_size=m * k))
        b = data.draw(st.lists(word, min_size=k * n, max_size=k * n))
        ram.write_words(0x1000, a)
        ram.write_words(0x2000, b)
        program(accel, m, n, k)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        kernel.run()
        assert ram.read_words(0x3000, m * n) == ref_matmul(a, b, m, n, k)

    @pytest.mark.parametrize("dims", [(0, 2, 2), (2, 0, 2), (2, 2, 0)])
    def test_zero_dimension_sets_error(self, dims):
        kernel, ram, accel, _ = make_accel()
        program(accel, *dims)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        assert reg_read(accel, Accelerator.STATUS) == Accelerator.ST_ERROR
        assert kernel.pending_count() == 0  # nothing scheduled

    def test_out_of_bounds_region_sets_error(self):
        kernel, ram, accel, _ = make_accel(ram_size=0x2000)
        program(accel, 8, 8, 8, src_a=0x1F00)  # 256B matrix exceeds RAM
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        assert reg_read(accel, Accelerator.STATUS) == Accelerator.ST_ERROR

    def test_dimension_product_overflow_sets_error(self):
        kernel, ram, accel, _ = make_accel()
        reg_write(accel, Accelerator.SRC_A, 0)
        reg_write(accel, Accelerator.SRC_B, 0)
        reg_write(accel, Accelerator.DST, 0)
        reg_write(accel, Accelerator.DIM_M, 0x10000)
        reg_write(accel, Accelerator.DIM_N, 0x10000)
        reg_write(accel, Accelerator.DIM_K, 0x10000)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        assert reg_read(accel, Accelerator.STATUS) == Accelerator.ST_ERROR

    def test_param_writes_while_busy_ignored(self):
        kernel, ram, accel, _ = make_accel()
        ram.write_words(0x1000, [1, 0, 0, 1])
        ram.write_words(0x2000, [9, 9, 9, 9])
        program(accel, 2, 2, 2)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        reg_write(accel, Accelerator.DIM_M, 77)
        assert reg_read(accel, Accelerator.DIM_M) == 2  # unchanged
        status = reg_read(accel, Accelerator.STATUS)
        assert status & Accelerator.ST_ERROR and status & Accelerator.ST_BUSY

    def test_start_while_busy_ignored_with_error(self):
        kernel, ram, accel, _ = make_accel()
        ram.write_words(0x1000, [1, 0, 0, 1])
        ram.write_words(0x2000, [2, 0, 0, 2])
        program(accel, 2, 2, 2)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        assert kernel.pending_count() == 1  # only one completion scheduled
        kernel.run()
        status = reg_read(accel, Accelerator.STATUS)
        assert status & Accelerator.ST_DONE and status & Accelerator.ST_ERROR

    def test_irq_discipline(self):
        kernel, ram, accel, irq_line = make_accel()
        ram.write_words(0x1000, [1])
        ram.write_words(0x2000, [1])
        program(accel, 1, 1, 1)
        reg_write(accel, Accelerator.CTRL,
                  Accelerator.CTRL_START | Accelerator.CTRL_IRQ_EN)
        assert irq_line == []  # not before completion
        kernel.run()
        assert irq_line == [True]  # DONE and IRQ_EN
        reg_write(accel, Accelerator.STATUS, Accelerator.ST_DONE)  # W1C
        assert irq_line == [True, False]
        assert reg_read(accel, Accelerator.STATUS) == 0

    def test_no_irq_without_enable_then_enable_later(self):
        kernel, ram, accel, irq_line = make_accel()
        ram.write_words(0x1000, [1])
        ram.write_words(0x2000, [1])
        program(accel, 1, 1, 1)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        kernel.run()
        assert irq_line == []
        # enabling while DONE is still set raises the line (level semantics)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_IRQ_EN)
        assert irq_line == [True]
        reg_write(accel, Accelerator.CTRL, 0)
        assert irq_line == [True, False]

    def test_error_write_one_to_clear(self):
        kernel, _, accel, _ = make_accel()
        program(accel, 0, 1, 1)
        reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
        assert reg_read(accel, Accelerator.STATUS) == Accelerator.ST_ERROR
        reg_write(accel, Accelerator.STATUS, Accelerator.ST_ERROR)
        assert reg_read(accel, Accelerator.STATUS) == 0

    def test_offset_beyond_map_is_address_error(self):
        _, _, accel, _ = make_accel()
        txn = read_txn(0x20, 4)
        accel.access(0x20, txn)
        assert txn.response == RESP_ADDRESS_ERROR

    def test_timing_linear_in_work(self):
        # base 16 + mnk cycles: two sizes pin both coefficients
        for m, n, k, cycles in ((2, 2, 2, 24), (4, 4, 4, 80)):
            kernel, ram, accel, _ = make_accel()
            ram.write_words(0x1000, [0] * (m * k))
            ram.write_words(0x2000, [0] * (k * n))
            program(accel, m, n, k)
            reg_write(accel, Accelerator.CTRL, Accelerator.CTRL_START)
            kernel.run()
            assert kernel.now() == cycles * PS_PER_S // 100_000_000
