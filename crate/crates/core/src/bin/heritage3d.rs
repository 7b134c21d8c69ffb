fn main() {
    heritage3d::cli::main()
}
