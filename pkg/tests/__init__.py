# Tests for carnot_lab
