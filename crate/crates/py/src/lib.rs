// bindings come later
