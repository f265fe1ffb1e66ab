//! The `dhabe` command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 cryptographic failure, 3 trust-management
//! denial, 4 format or serialization error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dhabe::codec::MAGIC;
use dhabe::harness::{parse_scenario, run_scenario, Scenario};
use dhabe::scheme::FLAW_DEMO_WARNING;
use dhabe::trust::{authorized_attributes, parse_attribute_map, parse_credentials, solve};
use dhabe::{
    AttributeMap, AttributeSet, Ciphertext, Codec, CredentialSet, DaKey, ErrorKind, GroupContext,
    GroupElement, MasterKey, PublicParams, Role, UserKey,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CRYPTO: i32 = 2;
pub const EXIT_TM: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "dhabe", version, about = "Hierarchical attribute-based encryption for virtual organizations")]
struct Cli {
    /// Write output objects as ASCII armor instead of binary.
    #[arg(long, global = true)]
    armor: bool,

    /// Seed the random generator for reproducible output.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a VO: public parameters, master key and root authority key.
    Setup {
        #[arg(long, value_name = "FILE")]
        pp: PathBuf,
        #[arg(long, value_name = "FILE")]
        mk: PathBuf,
        #[arg(long, value_name = "FILE")]
        root: PathBuf,
    },
    /// Delegate a sub-authority.
    Delegate {
        #[arg(long)]
        pp: PathBuf,
        #[arg(long)]
        parent: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forge a sibling authority by re-randomizing a DA key (flaw demonstration).
    Rerand {
        #[arg(long)]
        pp: PathBuf,
        #[arg(long)]
        da: PathBuf,
        /// Claimed path, `/`-separated, same depth as the source authority.
        #[arg(long)]
        path: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Issue a user key shard, subject to trust management.
    Issue(IssueArgs),
    /// Merge user key shards issued to the same user.
    Merge {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true, num_args = 1..)]
        keys: Vec<PathBuf>,
    },
    /// Encrypt a file under a policy.
    Encrypt {
        #[arg(long)]
        pp: PathBuf,
        #[arg(long)]
        policy: String,
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt a ciphertext; the plaintext goes to --out or stdout.
    Decrypt {
        #[arg(long)]
        pp: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start a new epoch and write its root authority key.
    EpochBump {
        #[arg(long)]
        pp: PathBuf,
        #[arg(long)]
        mk: PathBuf,
        #[arg(long)]
        root_out: PathBuf,
        /// Defaults to overwriting --pp.
        #[arg(long)]
        pp_out: Option<PathBuf>,
        /// Defaults to overwriting --mk.
        #[arg(long)]
        mk_out: Option<PathBuf>,
    },
    /// Trust-management queries.
    Tm {
        #[command(subcommand)]
        command: TmCommand,
    },
    /// Recover the master witness from a DA key.
    Witness {
        #[arg(long)]
        pp: PathBuf,
        #[arg(long)]
        da: PathBuf,
    },
    /// Run a scenario (`healthcare` or a scenario file) and print its event log.
    Demo { scenario: String },
}

#[derive(Args, Debug)]
struct IssueArgs {
    #[arg(long)]
    pp: PathBuf,
    #[arg(long)]
    da: PathBuf,
    #[arg(long)]
    user: String,
    /// Comma-separated attributes.
    #[arg(long)]
    attrs: String,
    #[arg(long, required_unless_present = "force")]
    creds: Option<PathBuf>,
    #[arg(long, required_unless_present = "force")]
    attr_map: Option<PathBuf>,
    /// Skip the trust-management check.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum TmCommand {
    /// Print role memberships, or the attributes a principal may receive from an issuer.
    Eval {
        #[arg(long)]
        creds: PathBuf,
        /// Only print this role's members.
        #[arg(long, conflicts_with = "principal")]
        role: Option<String>,
        #[arg(long, requires_all = ["attr_map", "issuer_path"])]
        principal: Option<String>,
        #[arg(long)]
        attr_map: Option<PathBuf>,
        /// `/`-separated path of the issuing authority.
        #[arg(long)]
        issuer_path: Option<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Denied(String),
    Lib(dhabe::Error),
    Expectations(usize),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => EXIT_USAGE,
            Failure::Denied(_) => EXIT_TM,
            Failure::Expectations(_) => EXIT_CRYPTO,
            Failure::Lib(e) => match e.kind() {
                ErrorKind::Input => EXIT_USAGE,
                ErrorKind::Crypto => EXIT_CRYPTO,
                ErrorKind::Format => EXIT_FORMAT,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Io(m) => m.clone(),
            Failure::Denied(m) => format!("trust management denied: {m}"),
            Failure::Lib(e) => e.to_string(),
            Failure::Expectations(n) => format!("{n} scenario expectation(s) failed"),
        }
    }
}

impl From<dhabe::Error> for Failure {
    fn from(e: dhabe::Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

struct Ctx<'a> {
    armor: bool,
    rng: ChaCha20Rng,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn write_object<T: Codec>(&self, path: &Path, obj: &T) -> Outcome {
        let bytes = if self.armor {
            obj.to_armored().into_bytes()
        } else {
            obj.to_bytes()
        };
        fs::write(path, bytes).map_err(|e| io_error(path, e))
    }

    fn out(&mut self, text: &str) -> Outcome {
        self.stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}")))
    }

    fn warn(&mut self, text: &str) {
        // Diagnostics are best effort.
        let _ = writeln!(self.stderr, "{text}");
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| io_error(path, e))
}

fn read_object<T: Codec>(path: &Path) -> Outcome<T> {
    T::decode_any(&read(path)?).map_err(|e| match e {
        dhabe::Error::Format(m) => Failure::Lib(dhabe::Error::Format(format!("{}: {m}", path.display()))),
        other => Failure::Lib(other),
    })
}

fn is_serialized(bytes: &[u8]) -> bool {
    bytes.starts_with(&MAGIC) || bytes.trim_ascii_start().starts_with(b"-----BEGIN DHABE")
}

/// Credential inputs may be plain text or serialized objects.
fn read_credentials(path: &Path) -> Outcome<CredentialSet> {
    let bytes = read(path)?;
    if is_serialized(&bytes) {
        return read_object(path);
    }
    let text = String::from_utf8(bytes).map_err(|_| Failure::Usage(format!("{}: not UTF-8", path.display())))?;
    Ok(parse_credentials(&text)?)
}

fn read_attribute_map(path: &Path) -> Outcome<AttributeMap> {
    let bytes = read(path)?;
    if is_serialized(&bytes) {
        return read_object(path);
    }
    let text = String::from_utf8(bytes).map_err(|_| Failure::Usage(format!("{}: not UTF-8", path.display())))?;
    Ok(parse_attribute_map(&text)?)
}

fn split_path(path: &str) -> Vec<String> {
    path.split('/').map(String::from).collect()
}

fn execute(cmd: Command, ctx: &mut Ctx<'_>) -> Outcome {
    match cmd {
        Command::Setup { pp, mk, root } => {
            let (params, master, root_key) = dhabe::setup(GroupContext::bls12_381(), &mut ctx.rng);
            ctx.write_object(&pp, &params)?;
            ctx.write_object(&mk, &master)?;
            ctx.write_object(&root, &root_key)?;
            ctx.out(&format!("epoch {}\n", params.current_epoch))
        }
        Command::Delegate { pp, parent, label, out } => {
            let pp: PublicParams = read_object(&pp)?;
            let parent: DaKey = read_object(&parent)?;
            let child = dhabe::delegate(&pp, &parent, &label, &mut ctx.rng)?;
            ctx.write_object(&out, &child)?;
            ctx.out(&format!("{}\n", child.path.join("/")))
        }
        Command::Rerand { pp, da, path, out } => {
            let pp: PublicParams = read_object(&pp)?;
            let da: DaKey = read_object(&da)?;
            let forged = dhabe::rerandomize(&pp, &da, &split_path(&path), &mut ctx.rng)?;
            ctx.warn(FLAW_DEMO_WARNING);
            ctx.write_object(&out, &forged)?;
            ctx.out(&format!("{}\n", forged.path.join("/")))
        }
        Command::Issue(args) => issue(args, ctx),
        Command::Merge { out, keys } => {
            let keys = keys.iter().map(|p| read_object::<UserKey>(p)).collect::<Outcome<Vec<_>>>()?;
            let merged = dhabe::merge_keys(&keys)?;
            ctx.write_object(&out, &merged)?;
            ctx.out(&format!("{} {{{}}}\n", merged.user_id, merged.attributes()))
        }
        Command::Encrypt { pp, policy, input, out } => {
            let pp: PublicParams = read_object(&pp)?;
            let tree = dhabe::parse_policy(&policy)?;
            let plaintext = read(&input)?;
            let ct = dhabe::encrypt(&pp, &tree, &plaintext, &mut ctx.rng);
            ctx.write_object(&out, &ct)
        }
        Command::Decrypt { pp, key, ct, out } => {
            let pp: PublicParams = read_object(&pp)?;
            let key: UserKey = read_object(&key)?;
            let ct: Ciphertext = read_object(&ct)?;
            let plaintext = dhabe::decrypt(&pp, &key, &ct)?;
            match out {
                Some(path) => fs::write(&path, plaintext).map_err(|e| io_error(&path, e)),
                None => ctx
                    .stdout
                    .write_all(&plaintext)
                    .map_err(|e| Failure::Io(format!("stdout: {e}"))),
            }
        }
        Command::EpochBump { pp, mk, root_out, pp_out, mk_out } => {
            let params: PublicParams = read_object(&pp)?;
            let mut master: MasterKey = read_object(&mk)?;
            let (next, root) = dhabe::epoch_rekey(&mut master, &params, &mut ctx.rng);
            ctx.write_object(pp_out.as_ref().unwrap_or(&pp), &next)?;
            ctx.write_object(mk_out.as_ref().unwrap_or(&mk), &master)?;
            ctx.write_object(&root_out, &root)?;
            ctx.out(&format!("epoch {}\n", next.current_epoch))
        }
        Command::Tm { command } => tm(command, ctx),
        Command::Witness { pp, da } => {
            let pp: PublicParams = read_object(&pp)?;
            let da: DaKey = read_object(&da)?;
            let w = dhabe::recover_master_witness(&da, &pp);
            ctx.out(&format!("{}\n", hex::encode(w.0.encode())))?;
            if !w.matches(&pp) {
                ctx.warn("witness does not match the public parameters");
            }
            Ok(())
        }
        Command::Demo { scenario } => {
            let sc = if scenario == "healthcare" {
                Scenario::healthcare()
            } else {
                let path = PathBuf::from(&scenario);
                let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
                parse_scenario(&text)?
            };
            let log = run_scenario(&sc)?;
            ctx.out(&log.to_text())?;
            match log.failures().count() {
                0 => Ok(()),
                n => Err(Failure::Expectations(n)),
            }
        }
    }
}

fn issue(args: IssueArgs, ctx: &mut Ctx<'_>) -> Outcome {
    let pp: PublicParams = read_object(&args.pp)?;
    let da: DaKey = read_object(&args.da)?;
    let attrs: AttributeSet = args.attrs.parse()?;
    if let Some(w) = da.warning() {
        ctx.warn(w);
    }
    if args.force {
        ctx.warn("warning: --force bypasses trust management");
    } else {
        let creds = read_credentials(args.creds.as_deref().expect("clap requires --creds"))?;
        let amap = read_attribute_map(args.attr_map.as_deref().expect("clap requires --attr-map"))?;
        let allowed = authorized_attributes(&creds, &amap, &args.user, &da.path);
        if attrs.is_empty() || !attrs.is_subset(&allowed) {
            return Err(Failure::Denied(format!(
                "{} may receive only {{{allowed}}} from {}, requested {{{attrs}}}",
                args.user,
                da.path.join("/")
            )));
        }
    }
    let shard = dhabe::issue_user_key(&pp, &da, &args.user, &attrs)?;
    let key = UserKey::from(shard);
    ctx.write_object(&args.out, &key)?;
    ctx.out(&format!("{} {{{}}} epoch {}\n", key.user_id, key.attributes(), key.epoch))
}

fn tm(cmd: TmCommand, ctx: &mut Ctx<'_>) -> Outcome {
    let TmCommand::Eval { creds, role, principal, attr_map, issuer_path } = cmd;
    let creds = read_credentials(&creds)?;
    if let Some(principal) = principal {
        let amap = read_attribute_map(attr_map.as_deref().expect("clap requires --attr-map"))?;
        let path = split_path(issuer_path.as_deref().expect("clap requires --issuer-path"));
        let attrs = authorized_attributes(&creds, &amap, &principal, &path);
        return ctx.out(&format!("{attrs}\n"));
    }
    let membership = solve(&creds);
    let mut text = String::new();
    match role {
        Some(role) => {
            let role: Role = role.parse().map_err(Failure::Usage)?;
            let members: Vec<String> = membership.members(&role).into_iter().collect();
            text += &format!("{role}: {}\n", members.join(", "));
        }
        None => {
            for (role, members) in membership.iter() {
                let members: Vec<&str> = members.iter().map(String::as_str).collect();
                text += &format!("{role}: {}\n", members.join(", "));
            }
        }
    }
    ctx.out(&text)
}

/// Runs the command line `args` (including the program name) and returns the exit code.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let text = e.render().to_string();
            return if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = stdout.write_all(text.as_bytes());
                EXIT_OK
            } else {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_USAGE
            };
        }
    };
    let rng = match cli.seed {
        Some(seed) => ChaCha20Rng::seed_from_u64(seed),
        None => ChaCha20Rng::from_entropy(),
    };
    let mut ctx = Ctx {
        armor: cli.armor,
        rng,
        stdout,
        stderr,
    };
    match execute(cli.command, &mut ctx) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            let _ = writeln!(ctx.stderr, "error: {}", failure.message());
            failure.code()
        }
    }
}
