pub mod straight_line;
